"""Frequency-aware mixed attention for skeleton action recognition, in numpy."""
__version__ = "0.1.0"
