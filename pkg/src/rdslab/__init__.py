"""Numerics for random dynamical systems: noise kernels, stationary measures,
Lyapunov spectra, random entropy and Euler-Maruyama stochastic flows."""

__version__ = "0.1.0"
