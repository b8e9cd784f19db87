"""Equilibrium prices of securities and options under exponential utility.

Affine factor models (additive Heston, pure-jump OU) are priced by damped
Fourier inversion; information-based models by Bayesian filtering.  A Monte
Carlo oracle and a command-line front end are included.
"""

__version__ = "0.1.0"
