"""Scattering-induced relative localization of a few particles, simulated by quantum jumps."""

__version__ = "0.1.0"
