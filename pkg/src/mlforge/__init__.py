"""Desk-scale ML experiment orchestration platform with a simulated executor."""

__version__ = "0.1.0"
