"""Trend-following strategies driven by a Kalman filter whose parameters are
fitted to trading performance with CMA-ES."""

__version__ = "0.1.0"
