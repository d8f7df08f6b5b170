"""Contaminated mixture-of-experts: simulation, MLE fitting and rate experiments."""

__version__ = "0.1.0"
