"""Certified Birkhoff sums over Kronecker sequences."""

from ergosum.enclosure import Enclosure, UndecidedError, Verdict

__version__ = "0.1.0"

__all__ = ["Enclosure", "UndecidedError", "Verdict", "__version__"]
