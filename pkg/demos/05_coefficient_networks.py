"""Networks that extract and re-synthesize Fourier coefficients.

The extraction network injects cos/sin bias fields, multiplies them
against the input with product gadgets, and averages with a zero-mode
multiplier; the synthesis network runs the construction backwards.  Any
finite-dimensional network can be slotted between them to act on the
coefficients.  Run:  python3 demos/05_coefficient_networks.py
"""

import numpy as np

from psifno.emulation import (
    build_ft_emulator,
    build_ift_emulator,
    fourier_conjugate_pipeline,
    mode_index_list,
)
from psifno.fno import PsiFno, compose, fno_forward
from psifno.spectral import Grid, GridField, field_from_function, l2_norm

N, d, B, eps = 2, 1, 1.0, 5e-4
g = Grid(d, N)
ft = build_ft_emulator(N, B=B, eps=eps, d=d)
ift = build_ift_emulator(N, B=B, eps=eps, d=d)
print(f"extraction net: lift {ft.d_v}, depth {ft.depth}; "
      f"synthesis net: lift {ift.d_v}, depth {ift.depth}")

v = field_from_function(g, np.cos)
out = fno_forward(ft, v).values.reshape(-1, 2 * g.size).mean(axis=0)
ks = mode_index_list(g)[:, 0]
print("\ncoefficients of cos(x) read off the constant output channels:")
for t, kk in enumerate(ks):
    print(f"  k={kk:+d}:  Re {out[2 * t]:+.5f}   Im {out[2 * t + 1]:+.5f}")

pipe = compose(ift, ft)
back = fno_forward(pipe, v)
print(f"\nround trip ||ift(ft(cos)) - cos||_L2 = "
      f"{l2_norm(GridField(g, back.values - v.values)):.2e}")

# slot a coefficient-space map between the two: here a damping of high modes
n_coef = 2 * g.size
damp = np.ones(n_coef)
for t, kk in enumerate(ks):
    if abs(kk) == N:
        damp[2 * t : 2 * t + 2] = 0.0  # kill the outermost modes
inner = PsiFno(g, np.diag(damp), (), np.eye(n_coef))
filtered = fourier_conjugate_pipeline(inner, ft, ift)
out2 = fno_forward(filtered, v)
print("with a coefficient-space filter killing |k| = N, cos(x) passes through:",
      f"{l2_norm(GridField(g, out2.values - v.values)):.2e}")
v2 = field_from_function(g, lambda x: np.cos(N * x))
out3 = fno_forward(filtered, v2)
print(f"while cos({N}x) is removed: residual norm {l2_norm(out3):.2e} "
      f"(input norm {l2_norm(v2):.2f})")
