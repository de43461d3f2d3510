"""Higher-dimensional random reversible circuits and an exact mixing laboratory."""

__version__ = "0.1.0"
