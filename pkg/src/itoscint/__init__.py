"""Scintillation of partially coherent beams in white-noise random media."""

__version__ = "0.1.0"
