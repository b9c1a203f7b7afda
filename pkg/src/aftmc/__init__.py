"""Chirp-multicarrier (AFT-MC) multi-target localization: synthesis, estimation, and bounds."""

__version__ = "0.1.0"
