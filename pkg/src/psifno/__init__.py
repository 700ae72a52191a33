"""Pseudo-spectral Fourier neural operators.

Exact spectral calculus on the periodic torus, Fourier-Galerkin Darcy and
semi-implicit Navier-Stokes solvers, constructive network emulators of
those solvers, and branch/trunk export.  See README.md for a tour.
"""

from . import darcy, deeponet, emulation, errors, fieldio, fno, navier_stokes, spectral

__all__ = [
    "darcy",
    "deeponet",
    "emulation",
    "errors",
    "fieldio",
    "fno",
    "navier_stokes",
    "spectral",
]

__version__ = "0.1.0"
