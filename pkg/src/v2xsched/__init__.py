"""Sidelink SB-SPS simulation with predicted resource reservation intervals."""

__version__ = "0.1.0"
