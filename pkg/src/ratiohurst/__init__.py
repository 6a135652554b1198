"""Hurst index estimation for fBm from ratios of second-order increments."""
