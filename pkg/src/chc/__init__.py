"""Fully discrete finite element scheme for the Cahn-Hilliard-Cook equation.

P1 finite elements in space, fully implicit backward Euler in time, additive
Q-Wiener noise sampled in the Neumann-Laplacian eigenbasis, plus the rate
studies that certify the scheme against spectral oracles.
"""

__version__ = "0.1.0"
