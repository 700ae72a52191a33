"""Fourier neural operator data model and exact forward evaluator.

A network maps a d_a-channel field to a d_u-channel field as

    Q o I_N o L_L o I_N o ... o L_1 o I_N o R,

with a pointwise lifting matrix R, pointwise projection matrix Q, and
layers

    L(v)_j = sigma( W v_j + b_j + F_N^{-1}( P(k) . F_N(v)(k) )_j ),

where the activation is optional per layer (a layer without it is a pure
affine/F-layer).  The interleaved pseudo-spectral projections are no-ops
while all data live at the network resolution, which is how every
construction in this package operates; inputs at other resolutions are
resampled on entry.

Multipliers P(k) are stored in factored form sum_t s_t(k) * A_t with
scalar mode arrays s_t over |k|_inf <= W and constant matrices A_t.  Real
outputs for real inputs are guaranteed by the conjugacy condition
P(-k) = conj(P(k)), checked entrywise at construction.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import erf

from .errors import BadParameters, DimensionMismatch, UnknownActivation
from .spectral import Grid, GridField, SpectralCoeffs, dft, idft, resample

MAGIC = b"PSIFNO1\n"
MULTIPLIER_SYM_RTOL = 1e-12


@dataclass(frozen=True)
class Activation:
    """Scalar activation with exact first and second derivatives."""

    name: str
    fn: callable
    d1: callable
    d2: callable

    def __call__(self, x):
        return self.fn(x)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_d1(x):
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * phi


def _gelu_d2(x):
    phi = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return (2.0 - x * x) * phi


_ACTIVATIONS = {
    "tanh": Activation(
        "tanh",
        np.tanh,
        lambda x: 1.0 - np.tanh(x) ** 2,
        lambda x: -2.0 * np.tanh(x) * (1.0 - np.tanh(x) ** 2),
    ),
    "gelu": Activation("gelu", _gelu, _gelu_d1, _gelu_d2),
}


def activation(tag: str) -> Activation:
    """Look up a supported activation (tanh, gelu) with derivatives."""
    try:
        return _ACTIVATIONS[tag]
    except KeyError:
        raise UnknownActivation(f"unknown activation {tag!r}; supported: tanh, gelu") from None


class FourierMultiplier:
    """Mode-wise matrix multiplier P(k) = sum_t s_t(k) A_t, |k|_inf <= W.

    s_t are complex arrays of shape (2W+1,)*d in centered mode order, A_t
    are (d_v, d_v) complex matrices; P is implicitly zero outside K_W.
    """

    def __init__(self, d: int, mode_radius: int, terms, d_v: int, check: bool = True):
        self.d = int(d)
        self.mode_radius = int(mode_radius)
        self.d_v = int(d_v)
        shape = (2 * self.mode_radius + 1,) * self.d
        prepared = []
        for s, A in terms:
            s = np.asarray(s, dtype=complex)
            A = np.asarray(A, dtype=complex)
            if s.shape != shape:
                raise DimensionMismatch(f"mode array shape {s.shape}, expected {shape}")
            if A.shape != (self.d_v, self.d_v):
                raise DimensionMismatch(f"matrix shape {A.shape}, expected {(d_v, d_v)}")
            prepared.append((s, A))
        self.terms = tuple(prepared)
        if check:
            self._check_conjugacy()

    def _check_conjugacy(self):
        """P(-k) must equal conj(P(k)) entrywise, so real fields map to real fields."""
        axes = tuple(range(self.d))
        scale = max((np.max(np.abs(s)) * np.max(np.abs(A)) for s, A in self.terms), default=0.0)
        if scale == 0.0:
            return
        chunk = max(1, min(self.d_v, 2_000_000 // (self.size_modes * self.d_v + 1)))
        for lo in range(0, self.d_v, chunk):
            hi = min(self.d_v, lo + chunk)
            block = 0.0
            for s, A in self.terms:
                block = block + s[..., None, None] * A[lo:hi, :]
            defect = np.max(np.abs(np.flip(block, axis=axes) - np.conj(block)))
            if defect > MULTIPLIER_SYM_RTOL * scale:
                raise BadParameters(
                    f"multiplier breaks conjugacy: defect {defect:.3e} vs scale {scale:.3e}"
                )

    @property
    def size_modes(self) -> int:
        return (2 * self.mode_radius + 1) ** self.d

    def apply(self, coeffs: np.ndarray, N: int) -> np.ndarray:
        """Apply to a centered coefficient array of shape (2N+1,)*d + (d_v,)."""
        W = self.mode_radius
        if W > N:
            raise DimensionMismatch(f"multiplier radius {W} exceeds resolution {N}")
        out = np.zeros_like(coeffs)
        sl = tuple(slice(N - W, N + W + 1) for _ in range(self.d))
        sub = coeffs[sl]
        acc = np.zeros_like(sub)
        for s, A in self.terms:
            acc += s[..., None] * (sub @ A.T)
        out[sl] = acc
        return out

    def dense(self, N: int) -> np.ndarray:
        """Materialize P(k) for every k in K_N; shape (2N+1,)*d + (d_v, d_v)."""
        shape = (2 * N + 1,) * self.d + (self.d_v, self.d_v)
        full = np.zeros(shape, dtype=complex)
        sl = tuple(slice(N - self.mode_radius, N + self.mode_radius + 1) for _ in range(self.d))
        for s, A in self.terms:
            full[sl] += s[..., None, None] * A
        return full

    def pad(self, d_v: int) -> "FourierMultiplier":
        if d_v == self.d_v:
            return self
        terms = []
        for s, A in self.terms:
            A2 = np.zeros((d_v, d_v), dtype=complex)
            A2[: self.d_v, : self.d_v] = A
            terms.append((s, A2))
        return FourierMultiplier(self.d, self.mode_radius, terms, d_v, check=False)

    def right_multiply(self, M: np.ndarray) -> "FourierMultiplier":
        """Multiplier with every A_t replaced by A_t @ M (for compositions)."""
        return FourierMultiplier(
            self.d, self.mode_radius, [(s, A @ M) for s, A in self.terms], self.d_v, check=False
        )


@dataclass(frozen=True)
class FnoLayer:
    """One network layer: v -> [sigma]( W v + b + F^-1(P F v) ).

    weight      : (d_v, d_v) real matrix or None
    bias        : None, a constant (d_v,) vector, or a GridField with d_v channels
    multiplier  : FourierMultiplier or None
    apply_activation : skip for a pure F-/affine layer
    """

    d_v: int
    weight: np.ndarray | None = None
    bias: object = None
    multiplier: FourierMultiplier | None = None
    apply_activation: bool = True

    def __post_init__(self):
        if self.weight is not None:
            w = np.asarray(self.weight, dtype=float)
            if w.shape != (self.d_v, self.d_v):
                raise DimensionMismatch(f"weight shape {w.shape}, expected {(self.d_v,) * 2}")
            object.__setattr__(self, "weight", w)
        if isinstance(self.bias, GridField):
            if self.bias.channels != self.d_v:
                raise DimensionMismatch("bias field channel count must equal d_v")
        elif self.bias is not None:
            b = np.asarray(self.bias, dtype=float).reshape(-1)
            if b.shape != (self.d_v,):
                raise DimensionMismatch(f"constant bias length {b.shape[0]}, expected {self.d_v}")
            object.__setattr__(self, "bias", b)
        if self.multiplier is not None and self.multiplier.d_v != self.d_v:
            raise DimensionMismatch("multiplier d_v must equal layer d_v")

    def padded(self, d_v: int, grid: Grid) -> "FnoLayer":
        if d_v == self.d_v:
            return self
        w = None
        if self.weight is not None:
            w = np.zeros((d_v, d_v))
            w[: self.d_v, : self.d_v] = self.weight
        b = self.bias
        if isinstance(b, GridField):
            vals = np.zeros(grid.shape + (d_v,))
            vals[..., : self.d_v] = b.values
            b = GridField(grid, vals)
        elif b is not None:
            b = np.concatenate([b, np.zeros(d_v - self.d_v)])
        m = self.multiplier.pad(d_v) if self.multiplier is not None else None
        return FnoLayer(d_v, w, b, m, self.apply_activation)


def _layer_affine(layer: FnoLayer, v: GridField) -> np.ndarray:
    """W v + conv(v), without bias or activation."""
    if v.channels != layer.d_v:
        raise DimensionMismatch(f"layer expects {layer.d_v} channels, got {v.channels}")
    pre = np.zeros_like(v.values)
    if layer.weight is not None:
        pre += v.values @ layer.weight.T
    if layer.multiplier is not None:
        c = dft(v)
        conv_hat = layer.multiplier.apply(c.coeffs, v.grid.N)
        pre += idft(SpectralCoeffs(v.grid, conv_hat, real_field=True)).values
    return pre


def layer_forward(layer: FnoLayer, v: GridField, act: Activation) -> GridField:
    """Evaluate one layer on grid values (exact; FFT-based convolution)."""
    pre = _layer_affine(layer, v)
    if isinstance(layer.bias, GridField):
        if layer.bias.grid != v.grid:
            raise DimensionMismatch("bias field lives on a different grid")
        pre += layer.bias.values
    elif layer.bias is not None:
        pre += layer.bias
    out = act(pre) if layer.apply_activation else pre
    return GridField(v.grid, out)


@dataclass(frozen=True)
class PsiFno:
    """Full network: lifting R, layers, projection Q, at one grid resolution."""

    grid: Grid
    lifting: np.ndarray      # (d_v, d_a)
    layers: tuple
    projection: np.ndarray   # (d_u, d_v)
    activation: str = "tanh"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        R = np.asarray(self.lifting, dtype=float)
        Q = np.asarray(self.projection, dtype=float)
        object.__setattr__(self, "lifting", R)
        object.__setattr__(self, "projection", Q)
        object.__setattr__(self, "layers", tuple(self.layers))
        d_v = R.shape[0]
        if Q.shape[1] != d_v:
            raise DimensionMismatch(
                f"projection expects lift {Q.shape[1]}, lifting produces {d_v}"
            )
        for layer in self.layers:
            if layer.d_v != d_v:
                raise DimensionMismatch("all layers must share the lifting dimension")
        activation(self.activation)

    @property
    def d_a(self) -> int:
        return self.lifting.shape[1]

    @property
    def d_v(self) -> int:
        return self.lifting.shape[0]

    @property
    def d_u(self) -> int:
        return self.projection.shape[0]

    @property
    def depth(self) -> int:
        return len(self.layers)


def fno_forward(net: PsiFno, a: GridField) -> GridField:
    """Apply the network; inputs at other resolutions are resampled first."""
    if a.grid.d != net.grid.d:
        raise DimensionMismatch(f"input dimension {a.grid.d}, network {net.grid.d}")
    if a.channels != net.d_a:
        raise DimensionMismatch(f"input has {a.channels} channels, network expects {net.d_a}")
    if a.grid.N != net.grid.N:
        a = resample(a, net.grid.N)
    act = activation(net.activation)
    v = GridField(net.grid, a.values @ net.lifting.T)
    for layer in net.layers:
        v = layer_forward(layer, v, act)
    return GridField(net.grid, v.values @ net.projection.T)


def compose(outer: PsiFno, inner: PsiFno) -> PsiFno:
    """Network computing outer(inner(.)), exactly, with depth summing.

    The pointwise bridge R_outer @ Q_inner is absorbed into the first layer
    of the outer network (or into the lifting/projection matrices when a
    factor has no layers), and channels are zero-padded to the larger lift.
    """
    if inner.grid != outer.grid:
        raise DimensionMismatch("composition requires matching grids")
    if inner.d_u != outer.d_a:
        raise DimensionMismatch(
            f"inner output channels {inner.d_u} != outer input channels {outer.d_a}"
        )
    if inner.activation != outer.activation:
        raise DimensionMismatch("composition requires a shared activation")
    grid = inner.grid
    if not outer.layers and not inner.layers:
        R = outer.lifting @ inner.projection @ inner.lifting
        return PsiFno(grid, R, (), outer.projection, outer.activation)
    if not outer.layers:
        Q = outer.projection @ outer.lifting @ inner.projection
        return PsiFno(grid, inner.lifting, inner.layers, Q, outer.activation)
    if not inner.layers:
        R = outer.lifting @ inner.projection @ inner.lifting
        return PsiFno(grid, R, outer.layers, outer.projection, outer.activation)

    d_v = max(inner.d_v, outer.d_v)
    bridge = outer.lifting @ inner.projection  # (d_v_outer, d_v_inner)
    M = np.zeros((d_v, d_v))
    M[: bridge.shape[0], : bridge.shape[1]] = bridge

    new_layers = [layer.padded(d_v, grid) for layer in inner.layers]
    first = outer.layers[0].padded(d_v, grid)
    w = first.weight @ M if first.weight is not None else None
    mult = first.multiplier.right_multiply(M) if first.multiplier is not None else None
    new_layers.append(FnoLayer(d_v, w, first.bias, mult, first.apply_activation))
    new_layers.extend(layer.padded(d_v, grid) for layer in outer.layers[1:])

    R = np.zeros((d_v, inner.d_a))
    R[: inner.d_v, :] = inner.lifting
    Q = np.zeros((outer.d_u, d_v))
    Q[:, : outer.d_v] = outer.projection
    return PsiFno(grid, R, tuple(new_layers), Q, outer.activation)


def validate_network(net: PsiFno) -> None:
    """Re-run all construction invariants: dimensions and multiplier conjugacy.

    Builders assemble multipliers from terms whose symmetry holds by
    construction and skip the per-term check for speed; this walks every
    layer and enforces it, raising on any violation.
    """
    for layer in net.layers:
        if layer.multiplier is not None:
            m = layer.multiplier
            FourierMultiplier(m.d, m.mode_radius, m.terms, m.d_v, check=True)
        if isinstance(layer.bias, GridField) and layer.bias.grid != net.grid:
            raise DimensionMismatch("bias field grid differs from the network grid")


@dataclass(frozen=True)
class SizeReport:
    """Degrees-of-freedom accounting for a network."""

    depth: int
    width: int
    lift: int
    size: int


def size_report(net: PsiFno) -> SizeReport:
    """depth L, width d_v (2N+1)^d, lift d_v, and

    size = d_u d_v + L (d_v^2 + d_v |J_N| + d_v^2 |J_N|) + d_a d_v.
    """
    J = net.grid.size
    d_v = net.d_v
    L = net.depth
    size = net.d_u * d_v + L * (d_v**2 + d_v * J + d_v**2 * J) + net.d_a * d_v
    return SizeReport(depth=L, width=d_v * J, lift=d_v, size=size)


# ---------------------------------------------------------------------------
# Model file: MAGIC + u64 header length + JSON header + raw payload.
# Payload order: lifting, projection, then per layer: weight?, bias?,
# then per multiplier term: modes (c16), matrix (c16).  Little-endian, C order.
# ---------------------------------------------------------------------------


def save_model(net: PsiFno, path) -> None:
    parts = []

    def put(arr, dtype):
        a = np.ascontiguousarray(arr, dtype=dtype)
        parts.append(a.tobytes())
        return a.size

    put(net.lifting, "<f8")
    put(net.projection, "<f8")
    layer_desc = []
    for layer in net.layers:
        desc = {
            "apply_activation": layer.apply_activation,
            "has_weight": layer.weight is not None,
            "bias": "none",
            "multiplier": None,
        }
        if layer.weight is not None:
            put(layer.weight, "<f8")
        if isinstance(layer.bias, GridField):
            desc["bias"] = "field"
            put(layer.bias.values, "<f8")
        elif layer.bias is not None:
            desc["bias"] = "const"
            put(layer.bias, "<f8")
        if layer.multiplier is not None:
            m = layer.multiplier
            desc["multiplier"] = {"mode_radius": m.mode_radius, "n_terms": len(m.terms)}
            for s, A in m.terms:
                put(s, "<c16")
                put(A, "<c16")
        layer_desc.append(desc)
    header = {
        "d": net.grid.d,
        "N": net.grid.N,
        "d_a": net.d_a,
        "d_v": net.d_v,
        "d_u": net.d_u,
        "L": net.depth,
        "activation": net.activation,
        "layers": layer_desc,
        "meta": net.meta,
    }
    blob = json.dumps(header).encode()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in parts:
            fh.write(p)


def load_model(path) -> PsiFno:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise BadParameters(f"{path}: not a PSIFNO1 model file")
    (hlen,) = struct.unpack_from("<Q", raw, len(MAGIC))
    off = len(MAGIC) + 8
    header = json.loads(raw[off : off + hlen].decode())
    off += hlen
    buf = memoryview(raw)

    def take(count, dtype):
        nonlocal off
        itemsize = np.dtype(dtype).itemsize
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=off).copy()
        off += count * itemsize
        return arr

    d, N = header["d"], header["N"]
    d_a, d_v, d_u = header["d_a"], header["d_v"], header["d_u"]
    grid = Grid(d, N)
    R = take(d_v * d_a, "<f8").reshape(d_v, d_a)
    Q = take(d_u * d_v, "<f8").reshape(d_u, d_v)
    layers = []
    for desc in header["layers"]:
        w = take(d_v * d_v, "<f8").reshape(d_v, d_v) if desc["has_weight"] else None
        bias = None
        if desc["bias"] == "field":
            bias = GridField(grid, take(grid.size * d_v, "<f8").reshape(grid.shape + (d_v,)))
        elif desc["bias"] == "const":
            bias = take(d_v, "<f8")
        mult = None
        if desc["multiplier"] is not None:
            W = desc["multiplier"]["mode_radius"]
            mshape = (2 * W + 1,) * d
            terms = []
            for _ in range(desc["multiplier"]["n_terms"]):
                s = take(int(np.prod(mshape)), "<c16").reshape(mshape)
                A = take(d_v * d_v, "<c16").reshape(d_v, d_v)
                terms.append((s, A))
            mult = FourierMultiplier(d, W, terms, d_v, check=False)
        layers.append(FnoLayer(d_v, w, bias, mult, desc["apply_activation"]))
    return PsiFno(grid, R, tuple(layers), Q, header["activation"], meta=header.get("meta", {}))
