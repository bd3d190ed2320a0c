"""1-bit radar imaging: simulation, cross-feature reconstruction, classification."""

__version__ = "0.1.0"
