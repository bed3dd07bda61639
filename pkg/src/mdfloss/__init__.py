"""Multi-scale discriminative feature loss for image restoration."""

__version__ = "0.1.0"
