"""Dressed excited-state simulator and parameter estimator for NV⁻ centers."""

__version__ = "0.1.0"
