"""Conditional plurisubharmonic envelopes on lattices in C^n."""
__version__ = "0.1.0"
