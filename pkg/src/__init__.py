"""strategio: strategyproof intervention assignment on panel data."""

__version__ = "0.1.0"
