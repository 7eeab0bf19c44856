"""Trajectory stream with Finsler energy weighting."""
