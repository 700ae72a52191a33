"""Tour of the spectral calculus on the periodic torus.

Transforms, exact derivatives, de-aliased products, the Leray projection
and Sobolev norms, all at desk scale.  Run with:  python3 demos/01_spectral_calculus.py
"""

import numpy as np

from psifno.spectral import (
    Grid,
    GridField,
    dealiased_product,
    derivative,
    dft,
    divergence,
    field_from_function,
    idft,
    inverse_laplacian,
    l2_norm,
    leray_project,
    random_field,
    resample,
    sobolev_norm,
)

print("== grids and transforms ==")
g = Grid(d=1, N=4)
print(f"1-d grid with mode radius N=4: {g.npoints} points, modes -4..4")

f = field_from_function(g, np.cos)
c = dft(f)
print("coefficients of cos(x):", np.round(c.coeffs[:, 0].real, 12))
print("round-trip error:", np.max(np.abs(idft(c).values - f.values)))

print("\n== exact derivatives ==")
s = field_from_function(g, np.sin)
ds = derivative(s, 0)
print("max |d/dx sin - cos| =", np.max(np.abs(ds.values[:, 0] - np.cos(g.axis_coordinates()))))

print("\n== de-aliased products ==")
# cos^2 = 1/2 + cos(2x)/2; at N=1 the high mode is truncated away exactly
g1 = Grid(1, 1)
cos1 = field_from_function(g1, np.cos)
prod = dealiased_product(cos1, cos1)
print("P_1(cos^2) values (should all be 0.5):", np.round(prod.values[:, 0], 12))

print("\n== Leray projection ==")
g2 = Grid(2, 6)
rng = np.random.default_rng(0)
u = random_field(g2, rng, channels=2)
w = leray_project(u)
print("divergence before:", f"{l2_norm(divergence(u)):.3e}",
      " after:", f"{l2_norm(divergence(w)):.3e}")
print("idempotence defect:", np.max(np.abs(leray_project(w).values - w.values)))

print("\n== Sobolev norms ==")
two_cos = field_from_function(g, lambda x: 2 * np.cos(x))
for s_order in (0.0, 1.0, 2.5):
    print(f"  ||2 cos||_H^{s_order} = {sobolev_norm(two_cos, s_order):.12f}"
          f"   (2 sqrt(pi) = {2 * np.sqrt(np.pi):.12f})")

print("\n== interpolation error decay ==")
# a field with algebraic spectral decay: resampling error falls like M^-s
from psifno.spectral import random_hermitian_coeffs

fine = Grid(1, 256)
c = random_hermitian_coeffs(fine, rng, decay=lambda kk: (1 + kk) ** -3.0)
rough = idft(c)
print("  M     ||I_M f - f||_L2")
for M in (8, 16, 32, 64):
    back = resample(resample(rough, M), 256)
    err = l2_norm(GridField(fine, back.values - rough.values))
    print(f"  {M:3d}   {err:.3e}")

print("\n== zero-mean inverse Laplacian ==")
src = field_from_function(g2, lambda x, y: np.cos(2 * x))
sol = inverse_laplacian(src)
print("(-Lap)^-1 cos(2x) amplitude (should be 1/4):", np.max(np.abs(sol.values)))
