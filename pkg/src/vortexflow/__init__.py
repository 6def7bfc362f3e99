"""Multi-scale laboratory for Ginzburg-Landau vortex dynamics."""

__version__ = "0.1.0"
