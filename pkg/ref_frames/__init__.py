"""Wrist morphological and facial semantic reference frames."""
