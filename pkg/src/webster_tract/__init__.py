"""Webster-equation vocal-tract rendering, inversion and evaluation."""

__version__ = "0.1.0"
