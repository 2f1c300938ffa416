"""Learnable-hardness GELU: x * Phi(lam * x) with lam >= 1."""

__version__ = "0.1.0"
