"""Discrete Fourier calculus on the periodic torus [0, 2pi]^d.

Fields are sampled on the regular odd grid with 2N+1 points per axis,
x_j = 2*pi*j/(2N+1), j in {0, ..., 2N}^d, and represented spectrally by
coefficients indexed over the centered mode set K_N = {|k|_inf <= N}.
The transform pair

    c_k = (2N+1)^-d * sum_j f_j exp(-i<x_j, k>)
    f_j = sum_k c_k exp(+i<x_j, k>)

is exact (an FFT reordering), so projections, derivatives, inverse
Laplacians, Leray projection and Sobolev norms are all evaluated without
discretization error on band-limited data.  Products of two degree-N
polynomials are computed exactly by evaluation on the doubled grid
(de-aliasing) followed by truncation.

All operations are pure functions of immutable inputs; 64-bit floats
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    BadParameters,
    BadTruncation,
    DimensionMismatch,
    HermitianViolation,
)

HERMITIAN_RTOL = 1e-12
IMAG_RESIDUE_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Regular periodic grid with an odd number of points per axis.

    d : spatial dimension (>= 1)
    N : mode radius; 2N+1 points per axis, so every |k|_inf <= N mode is
        uniquely representable and |J_N| = |K_N| = (2N+1)^d.
    """

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise BadParameters(f"spatial dimension must be a positive integer, got {self.d}")
        if self.N < 1 or int(self.N) != self.N:
            raise BadParameters(f"mode radius must be a positive integer, got {self.N}")

    @property
    def npoints(self) -> int:
        return 2 * self.N + 1

    @property
    def shape(self) -> tuple:
        return (self.npoints,) * self.d

    @property
    def size(self) -> int:
        return self.npoints**self.d

    def axis_coordinates(self) -> np.ndarray:
        """Grid coordinates 2*pi*j/(2N+1) along one axis."""
        return 2.0 * np.pi * np.arange(self.npoints) / self.npoints

    def coordinates(self) -> list:
        """d broadcastable coordinate arrays (sparse meshgrid)."""
        x = self.axis_coordinates()
        return list(np.meshgrid(*([x] * self.d), indexing="ij", sparse=True))

    def modes(self) -> list:
        """d broadcastable integer mode arrays in centered order -N..N."""
        return _mode_mesh(self.d, self.N)


@lru_cache(maxsize=None)
def _mode_mesh(d: int, N: int) -> list:
    k = np.arange(-N, N + 1)
    return list(np.meshgrid(*([k] * d), indexing="ij", sparse=True))


@lru_cache(maxsize=None)
def _mode_sq(d: int, N: int) -> np.ndarray:
    """|k|^2 on the centered mode lattice, shape (2N+1,)*d."""
    ks = _mode_mesh(d, N)
    out = np.zeros((2 * N + 1,) * d)
    for kk in ks:
        out = out + kk.astype(float) ** 2
    return out


@dataclass(frozen=True)
class GridField:
    """Real samples of a c-channel field on a Grid; values shape = grid.shape + (c,)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[:-1] != self.grid.shape or v.ndim != self.grid.d + 1:
            raise DimensionMismatch(
                f"values shape {v.shape} does not match grid {self.grid.shape} + (channels,)"
            )
        if not np.all(np.isfinite(v)):
            raise BadParameters("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[-1]

    def channel(self, c: int) -> "GridField":
        return GridField(self.grid, self.values[..., c : c + 1])


@dataclass(frozen=True)
class SpectralCoeffs:
    """Complex coefficients over K_N in centered (lexicographic -N..N) order.

    real_field flags that the represented field is real; conjugate symmetry
    coeffs(-k) = conj(coeffs(k)) is then enforced to HERMITIAN_RTOL relative.
    """

    grid: Grid
    coeffs: np.ndarray
    real_field: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[:-1] != self.grid.shape or c.ndim != self.grid.d + 1:
            raise DimensionMismatch(
                f"coeffs shape {c.shape} does not match grid {self.grid.shape} + (channels,)"
            )
        object.__setattr__(self, "coeffs", c)
        if self.real_field:
            defect = hermitian_defect(c, self.grid.d)
            scale = np.max(np.abs(c)) or 1.0
            if defect > HERMITIAN_RTOL * scale:
                raise HermitianViolation(
                    f"conjugate-symmetry defect {defect:.3e} exceeds "
                    f"{HERMITIAN_RTOL:.0e} * {scale:.3e}"
                )

    @property
    def channels(self) -> int:
        return self.coeffs.shape[-1]


def hermitian_defect(coeffs: np.ndarray, d: int) -> float:
    """max_k |c(-k) - conj(c(k))| over a centered coefficient array."""
    flipped = np.flip(coeffs, axis=tuple(range(d)))
    return float(np.max(np.abs(flipped - np.conj(coeffs))))


@dataclass(frozen=True)
class SobolevIndex:
    """Smoothness order s >= 0; homogeneous selects the zero-mean seminorm."""

    s: float
    homogeneous: bool = False

    def __post_init__(self):
        if not np.isfinite(self.s) or self.s < 0:
            raise BadParameters(f"Sobolev order must be finite and >= 0, got {self.s}")


def _spatial_axes(d: int) -> tuple:
    return tuple(range(d))


def dft(f: GridField) -> SpectralCoeffs:
    """Forward transform; normalization (2N+1)^-d on this side, none on idft.

    The input is real, so the exact transform is conjugate-symmetric; the
    antisymmetric residue of the FFT (pure round-off) is projected out,
    making the symmetry invariant hold exactly.
    """
    g = f.grid
    axes = _spatial_axes(g.d)
    c = np.fft.fftn(f.values, axes=axes) / g.size
    c = np.fft.fftshift(c, axes=axes)
    c = 0.5 * (c + np.conj(np.flip(c, axis=axes)))
    return SpectralCoeffs(g, c, real_field=True)


def idft(c: SpectralCoeffs, require_real: bool = True) -> GridField:
    """Inverse transform f_j = sum_k c_k exp(i<x_j,k>); returns the real part.

    Raises HermitianViolation when a real field is requested but the
    coefficients fail conjugate symmetry beyond tolerance.
    """
    g = c.grid
    axes = _spatial_axes(g.d)
    if require_real:
        defect = hermitian_defect(c.coeffs, g.d)
        scale = np.max(np.abs(c.coeffs)) or 1.0
        if defect > 1e-9 * scale:
            raise HermitianViolation(
                f"cannot produce a real field: symmetry defect {defect:.3e} "
                f"(scale {scale:.3e})"
            )
    unshifted = np.fft.ifftshift(c.coeffs, axes=axes)
    v = np.fft.ifftn(unshifted, axes=axes) * g.size
    if require_real:
        imag = np.max(np.abs(v.imag))
        scale = np.max(np.abs(v.real)) or 1.0
        assert imag <= IMAG_RESIDUE_RTOL * scale + 1e-14, (
            f"imaginary residue {imag:.3e} exceeds {IMAG_RESIDUE_RTOL:.0e} relative"
        )
    return GridField(g, v.real)


def _fft_coeffs(values: np.ndarray, d: int) -> np.ndarray:
    """Unvalidated forward transform of real grid values (centered order).

    Internal hot-path helper: skips the symmetrization and invariant checks
    of dft(); the round-off antisymmetry is harmless where this is used
    because results return to grid space through a final real part.
    """
    axes = tuple(range(d))
    n = values.shape[0] ** d
    return np.fft.fftshift(np.fft.fftn(values, axes=axes), axes=axes) / n


def _ifft_values(coeffs: np.ndarray, d: int) -> np.ndarray:
    """Unvalidated inverse transform; returns the real part."""
    axes = tuple(range(d))
    n = coeffs.shape[0] ** d
    return np.fft.ifftn(np.fft.ifftshift(coeffs, axes=axes), axes=axes).real * n


def truncation_mask(grid: Grid, M: int, zero_mean: bool = False) -> np.ndarray:
    """Indicator of |k|_inf <= M (optionally excluding k=0) on the centered lattice."""
    mask = np.ones(grid.shape, dtype=bool)
    for kk in grid.modes():
        mask &= np.abs(kk) <= M
    if zero_mean:
        center = (grid.N,) * grid.d
        mask[center] = False
    return mask


def project(c: SpectralCoeffs, M: int, zero_mean: bool = False) -> SpectralCoeffs:
    """L^2-orthogonal truncation to modes |k|_inf <= M at unchanged resolution.

    zero_mean additionally removes the k=0 mode (projection onto zero-mean
    polynomials).
    """
    if M > c.grid.N:
        raise BadTruncation(f"truncation radius {M} exceeds resolution {c.grid.N}")
    if M < 0:
        raise BadParameters("truncation radius must be >= 0")
    mask = truncation_mask(c.grid, M, zero_mean)
    return SpectralCoeffs(c.grid, c.coeffs * mask[..., None], real_field=c.real_field)


def _pad_or_fold(coeffs: np.ndarray, d: int, N_from: int, N_to: int) -> np.ndarray:
    """Change mode radius of a centered coefficient array.

    Upsampling zero-pads (exact).  Downsampling folds each mode onto its
    representative modulo 2*N_to+1, which reproduces pointwise sampling of
    the trigonometric interpolant on the coarser grid (aliasing included).
    """
    if N_to == N_from:
        return coeffs.copy()
    n_to = 2 * N_to + 1
    if N_to > N_from:
        out = np.zeros((n_to,) * d + coeffs.shape[d:], dtype=coeffs.dtype)
        sl = tuple(slice(N_to - N_from, N_to + N_from + 1) for _ in range(d))
        out[sl] = coeffs
        return out
    out = coeffs
    k_vals = np.arange(-N_from, N_from + 1)
    target = (k_vals + N_to) % n_to
    for axis in range(d):
        moved = np.moveaxis(out, axis, 0)
        acc = np.zeros((n_to,) + moved.shape[1:], dtype=coeffs.dtype)
        np.add.at(acc, target, moved)
        out = np.moveaxis(acc, 0, axis)
    return out


def resample(f: GridField, M: int) -> GridField:
    """Evaluate the degree-N interpolant of f on the (2M+1)^d grid.

    Exact for band-limited fields whenever M >= N; for M < N this is the
    pseudo-spectral projection onto the coarser grid (modes alias).
    """
    if M < 1 or int(M) != M:
        raise BadParameters(f"target mode radius must be a positive integer, got {M}")
    g = f.grid
    if M == g.N:
        return GridField(g, f.values.copy())
    c = dft(f)
    out = _pad_or_fold(c.coeffs, g.d, g.N, M)
    return idft(SpectralCoeffs(Grid(g.d, M), out, real_field=True))


def derivative(f: GridField, axis: int) -> GridField:
    """Exact spectral partial derivative (multiplier i*k_axis)."""
    g = f.grid
    if not 0 <= axis < g.d:
        raise DimensionMismatch(f"axis {axis} out of range for dimension {g.d}")
    c = dft(f)
    kk = g.modes()[axis].astype(float)
    out = c.coeffs * (1j * kk)[..., None]
    return idft(SpectralCoeffs(g, out, real_field=True))


def gradient(f: GridField) -> list:
    """All d partial derivatives of a field (channel-wise)."""
    return [derivative(f, axis) for axis in range(f.grid.d)]


def divergence(u: GridField) -> GridField:
    """Spectral divergence of a d-channel vector field."""
    g = u.grid
    if u.channels != g.d:
        raise DimensionMismatch(f"divergence needs {g.d} channels, got {u.channels}")
    c = dft(u)
    ks = g.modes()
    out = np.zeros(g.shape + (1,), dtype=complex)
    for axis in range(g.d):
        out[..., 0] += (1j * ks[axis].astype(float)) * c.coeffs[..., axis]
    return idft(SpectralCoeffs(g, out, real_field=True))


def dealiased_product(u: GridField, v: GridField) -> GridField:
    """Exact truncated product P_N(u*v) via evaluation on the doubled grid.

    Both factors are resampled to mode radius 2N (exact), multiplied
    pointwise, and the transform of the product -- exactly band-limited to
    2N -- is truncated back to |k|_inf <= N.  Channel counts must match or
    one factor must be scalar (broadcast).
    """
    if u.grid != v.grid:
        raise DimensionMismatch("dealiased_product requires a shared grid")
    if u.channels != v.channels and 1 not in (u.channels, v.channels):
        raise DimensionMismatch(
            f"channel mismatch {u.channels} vs {v.channels} (no broadcast)"
        )
    g = u.grid
    uu = resample(u, 2 * g.N)
    vv = resample(v, 2 * g.N)
    w = GridField(uu.grid, uu.values * vv.values)
    c = dft(w)
    out = _pad_or_fold(project(c, g.N).coeffs, g.d, 2 * g.N, g.N)
    return idft(SpectralCoeffs(g, out, real_field=True))


def leray_project(u: GridField) -> GridField:
    """Leray-Fourier projection: per mode k != 0 apply 1 - k k^T/|k|^2, kill k=0.

    Output is divergence-free and zero-mean; the projection is idempotent
    and fixes divergence-free fields.
    """
    g = u.grid
    if u.channels != g.d:
        raise DimensionMismatch(f"Leray projection needs {g.d} channels, got {u.channels}")
    c = dft(u)
    ks = [kk.astype(float) for kk in g.modes()]
    k2 = _mode_sq(g.d, g.N).copy()
    center = (g.N,) * g.d
    k2[center] = 1.0  # avoid 0/0; the k=0 mode is zeroed below
    kdotc = np.zeros(g.shape, dtype=complex)
    for axis in range(g.d):
        kdotc += ks[axis] * c.coeffs[..., axis]
    kdotc /= k2
    out = np.empty_like(c.coeffs)
    for axis in range(g.d):
        out[..., axis] = c.coeffs[..., axis] - ks[axis] * kdotc
    out[center + (slice(None),)] = 0.0
    return idft(SpectralCoeffs(g, out, real_field=True))


def sobolev_norm(f: GridField, idx: "SobolevIndex | float", homogeneous: bool = False) -> float:
    """Sobolev norm from the coefficients.

    ||f||_{H^s}^2  = (2pi)^d/2 * sum_k (1+|k|^{2s}) |c_k|^2   (so H^0 = L^2)
    ||f||_{Hdot^s}^2 = (2pi)^d * sum_{k!=0} |k|^{2s} |c_k|^2

    Multi-channel fields sum the squares over channels.  The homogeneous
    seminorm ignores the mean by construction.
    """
    if not isinstance(idx, SobolevIndex):
        idx = SobolevIndex(float(idx), homogeneous)
    g = f.grid
    c = dft(f)
    power = np.sum(np.abs(c.coeffs) ** 2, axis=-1)
    k2 = _mode_sq(g.d, g.N)
    vol = (2.0 * np.pi) ** g.d
    if idx.homogeneous:
        w = np.where(k2 > 0, k2**idx.s, 0.0)
        return float(np.sqrt(vol * np.sum(w * power)))
    w = 1.0 + k2**idx.s
    return float(np.sqrt(0.5 * vol * np.sum(w * power)))


def l2_norm(f: GridField) -> float:
    return sobolev_norm(f, SobolevIndex(0.0))


def mean(f: GridField) -> np.ndarray:
    """Per-channel mean (the k=0 coefficient)."""
    return f.values.mean(axis=tuple(range(f.grid.d)))


def inverse_laplacian(f: GridField) -> GridField:
    """Zero-mean solution of -Lap(u) = f - mean(f): multiplier 1/|k|^2, k != 0."""
    g = f.grid
    c = dft(f)
    k2 = _mode_sq(g.d, g.N).copy()
    center = (g.N,) * g.d
    k2[center] = 1.0
    out = c.coeffs / k2[..., None]
    out[center + (slice(None),)] = 0.0
    return idft(SpectralCoeffs(g, out, real_field=True))


def helmholtz_inverse(f: GridField, alpha: float) -> GridField:
    """(1 - alpha*Lap)^-1: multiplier 1/(1 + alpha|k|^2); contraction for alpha >= 0."""
    if alpha < 0:
        raise BadParameters(f"helmholtz_inverse requires alpha >= 0, got {alpha}")
    g = f.grid
    c = dft(f)
    k2 = _mode_sq(g.d, g.N)
    out = c.coeffs / (1.0 + alpha * k2)[..., None]
    return idft(SpectralCoeffs(g, out, real_field=True))


def evaluate(f: GridField, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant at arbitrary points in [0,2pi)^d.

    points: array (m, d).  Returns (m, channels).
    """
    g = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != g.d:
        raise DimensionMismatch(f"points must have {g.d} columns, got {pts.shape[1]}")
    c = dft(f)
    flat = c.coeffs.reshape(-1, c.channels)
    k_list = np.stack([kk.ravel() for kk in np.meshgrid(
        *([np.arange(-g.N, g.N + 1)] * g.d), indexing="ij")], axis=-1)
    phases = np.exp(1j * pts @ k_list.T.astype(float))
    return np.real(phases @ flat)


def l2_sup_bound(grid: Grid, l2: float) -> float:
    """Sup-norm envelope sqrt(|K_N|)/(2pi)^{d/2} * ||f||_{L^2} for band-limited f."""
    return float(np.sqrt(grid.size) / (2.0 * np.pi) ** (grid.d / 2.0) * l2)


def constant_field(grid: Grid, values) -> GridField:
    """Field with constant per-channel values (scalar or length-c vector)."""
    vec = np.atleast_1d(np.asarray(values, dtype=float))
    return GridField(grid, np.broadcast_to(vec, grid.shape + vec.shape).copy())


def field_from_function(grid: Grid, fn) -> GridField:
    """Sample fn(x1, ..., xd) -> scalar or channel tuple on the grid."""
    coords = grid.coordinates()
    out = fn(*coords)
    if isinstance(out, (tuple, list)):
        vals = np.stack([np.broadcast_to(o, grid.shape) for o in out], axis=-1)
    else:
        vals = np.broadcast_to(out, grid.shape)[..., None]
    return GridField(grid, np.ascontiguousarray(vals, dtype=float))


def random_hermitian_coeffs(
    grid: Grid,
    rng: np.random.Generator,
    channels: int = 1,
    decay=None,
    zero_mean: bool = False,
) -> SpectralCoeffs:
    """Random coefficients with enforced conjugate symmetry.

    decay: optional callable |k|_2 -> magnitude envelope applied after
    symmetrization.
    """
    shape = grid.shape + (channels,)
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    axes = tuple(range(grid.d))
    sym = 0.5 * (raw + np.conj(np.flip(raw, axis=axes)))
    if decay is not None:
        kabs = np.sqrt(_mode_sq(grid.d, grid.N))
        sym = sym * decay(kabs)[..., None]
    if zero_mean:
        sym[(grid.N,) * grid.d + (slice(None),)] = 0.0
    return SpectralCoeffs(grid, sym, real_field=True)


def random_field(
    grid: Grid,
    rng: np.random.Generator,
    channels: int = 1,
    decay=None,
    zero_mean: bool = False,
) -> GridField:
    """Random real band-limited field, optionally with a spectral envelope."""
    return idft(random_hermitian_coeffs(grid, rng, channels, decay, zero_mean))
