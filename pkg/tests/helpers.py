"""Shared slow-but-independent oracles used across the test suite.

Everything here is written against the definitions directly (explicit
sums, direct convolution), so it cannot share bugs with the FFT-based
implementation paths it checks.
"""

import numpy as np
from scipy.signal import convolve

from psifno.spectral import Grid, GridField


def mode_list(grid: Grid) -> np.ndarray:
    """All k in K_N as an (|K_N|, d) integer array (lexicographic -N..N)."""
    axes = [np.arange(-grid.N, grid.N + 1)] * grid.d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def grid_points(grid: Grid) -> np.ndarray:
    """All grid points x_j as an (|J_N|, d) array."""
    x = grid.axis_coordinates()
    mesh = np.meshgrid(*([x] * grid.d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def naive_dft(f: GridField) -> np.ndarray:
    """O(|J|^2) transform by explicit summation; centered order + channels."""
    g = f.grid
    ks = mode_list(g)
    xs = grid_points(g)
    phases = np.exp(-1j * ks @ xs.T)  # (|K|, |J|)
    flat = f.values.reshape(-1, f.channels)
    out = phases @ flat / g.size
    return out.reshape(g.shape + (f.channels,))


def naive_idft(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    ks = mode_list(grid)
    xs = grid_points(grid)
    phases = np.exp(1j * xs @ ks.T)  # (|J|, |K|)
    flat = coeffs.reshape(-1, coeffs.shape[-1])
    out = phases @ flat
    return out.reshape(grid.shape + (coeffs.shape[-1],))


def convolution_truncated(cu: np.ndarray, cv: np.ndarray, N: int) -> np.ndarray:
    """Exact coefficient convolution of two K_N arrays, truncated to K_N.

    Inputs/outputs are centered single-channel arrays of shape (2N+1,)*d.
    Uses direct (non-FFT) convolution so it is an independent oracle.
    """
    full = convolve(cu, cv, mode="full", method="direct")
    d = cu.ndim
    center = tuple(slice(N, 3 * N + 1) for _ in range(d))
    return full[center]


def rel_err(a, b) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    denom = max(np.max(np.abs(b)), 1e-300)
    return float(np.max(np.abs(a - b)) / denom)
