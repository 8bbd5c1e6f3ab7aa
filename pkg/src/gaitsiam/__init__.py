"""Siamese gait authentication trained on-device style, on the CPU."""

__version__ = "0.1.0"
