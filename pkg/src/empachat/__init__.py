"""Desk-scale empathetic dialogue: warm-started encoder-decoder over segmented text."""

__version__ = "0.1.0"
