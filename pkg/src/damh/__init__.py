"""Joint state and parameter inference for Gaussian state-space models
with a two-phase adaptive MCMC scheme."""

__version__ = "0.1.0"
