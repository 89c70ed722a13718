"""Estimator averaging for spatial point-process and random-set models."""

__version__ = "1.0.0"
