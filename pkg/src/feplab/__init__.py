"""Numerical verification laboratory for the free-energy-principle pipeline."""
