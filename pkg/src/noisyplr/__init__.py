"""Adaptive-LASSO logistic regression with noisy multi-expert labels,
solved by a partition-insensitive linearized ADMM."""

__version__ = "0.1.0"
