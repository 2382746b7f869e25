"""
Hard-edge numerics for Muttalib-Borodin ensembles at theta = 1/r.

Spectral curves, equilibrium measures, finite-n biorthogonal kernels, the
global and Meijer-G parametrices, and the limiting hard-edge kernel.
"""

from .config import VERSION as __version__
