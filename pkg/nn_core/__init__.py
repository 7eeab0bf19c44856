"""Reverse-mode autodiff engine, layers, optimizer and checkpoints."""
