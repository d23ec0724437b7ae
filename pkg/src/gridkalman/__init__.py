"""Kalman-filter state estimation for distribution grids.

Submodules are imported explicitly (``from gridkalman import filters``);
the package root stays import-light so the command line entry point can
pin BLAS thread counts before numpy is first loaded.
"""

__version__ = "0.1.0"
