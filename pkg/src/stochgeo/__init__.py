"""Expected volume and Euler characteristic of random zero sets."""

__version__ = "0.1.0"
