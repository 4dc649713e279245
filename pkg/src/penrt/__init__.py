"""Response-time classification of pen-tablet task recordings."""

__version__ = "0.1.0"
