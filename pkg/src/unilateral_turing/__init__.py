"""Unilateral sources/sinks and the Turing bifurcation region."""

__version__ = "0.1.0"
