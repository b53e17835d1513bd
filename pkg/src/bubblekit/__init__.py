"""Earning-yield bubble model: densities, moments, calibration and divergence tests."""

__version__ = "0.1.0"
