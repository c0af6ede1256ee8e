"""Bayesian synthesis of biased and unbiased longitudinal surveys."""

__version__ = "0.1.0"
