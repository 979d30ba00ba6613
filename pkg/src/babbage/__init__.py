"""Tools for self-maps f of R^m with f^n = f^k: detection, image chains, conjugacies, obstructions."""

__version__ = "0.1.0"
