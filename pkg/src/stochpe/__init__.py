"""Stochastic primitive equations: pseudo-spectral solver and Monte Carlo diagnostics."""
