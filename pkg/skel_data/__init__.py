"""Skeleton data model, file I/O, normalization, augmentation and synthetic gestures."""
