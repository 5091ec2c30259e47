"""Circuit-simulation kernel for power-grid transients."""

__version__ = "0.1.0"
