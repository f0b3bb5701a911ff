"""Disfluency correction via adversarially trained sequence tagging."""

__version__ = "0.1.0"
