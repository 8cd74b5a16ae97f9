"""Calibration and analytics for mobile low-cost noise sensors."""

__version__ = "0.1.0"
