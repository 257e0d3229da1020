"""Calibration toolkit for multivariate non-Gaussian (Levy-based) return models."""

__version__ = "0.1.0"
