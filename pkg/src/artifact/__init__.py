"""Slit holomorphic stochastic flows coupled to Gaussian free fields."""

__version__ = "0.1.0"
