"""Limit-order-book market simulation and neural posterior calibration."""

__version__ = "0.1.0"
