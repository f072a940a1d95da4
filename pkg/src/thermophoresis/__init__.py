"""Thermophoresis of a Brownian particle in driven and spatially distributed
oscillator baths: microscopic simulations, effective Langevin and
Fokker-Planck descriptions, and the analysis tying them together."""

__version__ = "0.1.0"
