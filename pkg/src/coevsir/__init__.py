"""Co-evolving SIR epidemics on dense dynamic random graphs."""

__version__ = "0.1.0"
