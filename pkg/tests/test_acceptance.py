"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Criteria marked with their stated tolerances; every tolerance is pinned
here, not computed at run time.  Criteria 4/5 run the documented final
times T = 0.4 / T = 4.0 (the stated tau values must divide T, and the
second-order term must dominate the startup error; see the repo notes).
"""

import json
import math
import time

import numpy as np
from scipy.signal import convolve

from psifno import darcy as dm
from psifno import navier_stokes as ns
from psifno.cli import main as cli_main
from psifno.fno import compose, fno_forward, size_report
from psifno.spectral import (
    Grid,
    GridField,
    dealiased_product,
    dft,
    divergence,
    evaluate,
    field_from_function,
    idft,
    l2_norm,
    leray_project,
    random_field,
    random_hermitian_coeffs,
    resample,
    sobolev_norm,
)


def report(criterion, ok, detail, budget_s, elapsed_s):
    line = (f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail} "
            f"({elapsed_s:.1f}s / budget {budget_s:.0f}s)")
    print(line)
    assert ok, line
    assert elapsed_s < budget_s, f"criterion {criterion} exceeded its runtime budget"


def test_c01_spectral_foundations():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)

    worst_rt = 0.0
    for d in (1, 2, 3):
        for N in (1, 2, 4, 8, 16):
            if (2 * N + 1) ** d > 40_000:
                continue
            f = random_field(Grid(d, N), rng)
            back = idft(dft(f))
            worst_rt = max(worst_rt, np.max(np.abs(back.values - f.values))
                           / np.max(np.abs(f.values)))

    worst_pars = 0.0
    for d in (1, 2):
        g = Grid(d, 8)
        f = random_field(g, rng)
        quad = np.sqrt((2 * np.pi) ** d / g.size * np.sum(f.values**2))
        worst_pars = max(worst_pars, abs(sobolev_norm(f, 0.0) - quad) / quad)

    worst_dealias = 0.0
    for d in (1, 2):
        for N in range(1, 17):
            g = Grid(d, N)
            u, v = random_field(g, rng), random_field(g, rng)
            got = dft(dealiased_product(u, v)).coeffs[..., 0]
            full = convolve(dft(u).coeffs[..., 0], dft(v).coeffs[..., 0],
                            mode="full", method="direct")
            want = full[tuple(slice(N, 3 * N + 1) for _ in range(d))]
            worst_dealias = max(worst_dealias,
                                np.max(np.abs(got - want)) / np.max(np.abs(want)))

    worst_leray = 0.0
    for d in (2, 3):
        g = Grid(d, 4 if d == 2 else 2)
        u = random_field(g, rng, channels=d)
        p1 = leray_project(u)
        p2 = leray_project(p1)
        worst_leray = max(worst_leray,
                          np.max(np.abs(p2.values - p1.values)) / np.max(np.abs(p1.values)),
                          np.max(np.abs(divergence(p1).values)) / l2_norm(u))

    ok = (worst_rt <= 1e-12 and worst_pars <= 1e-10
          and worst_dealias <= 1e-10 and worst_leray <= 1e-10)
    report(1, ok,
           f"round-trip {worst_rt:.1e} (<=1e-12), parseval {worst_pars:.1e} (<=1e-10), "
           f"dealias {worst_dealias:.1e} (<=1e-10), leray {worst_leray:.1e} (<=1e-10)",
           10, time.perf_counter() - t0)


def test_c02_darcy_rate():
    t0 = time.perf_counter()
    slopes = {}
    for k in (1, 2):
        rng = np.random.default_rng(200 + k)
        a, f, u_star = dm.manufactured_problem(2, 0.5, k, N_max=64, rng=rng)
        Ns = [8, 16, 32, 64]
        errs = [
            dm.h1_error_against(dm.solve(dm.DarcyProblem(a, f, 0.5, k, N)).u, u_star)
            for N in Ns
        ]
        slopes[k] = -np.polyfit(np.log(Ns), np.log(errs), 1)[0]
    ok = all(slopes[k] >= k - 0.3 for k in (1, 2))
    report(2, ok,
           f"H1 slopes k=1: {slopes[1]:.2f} (>=0.7), k=2: {slopes[2]:.2f} (>=1.7)",
           30, time.perf_counter() - t0)


def test_c03_darcy_contraction():
    t0 = time.perf_counter()
    lam, N = 0.5, 8
    rng = np.random.default_rng(300)
    a = dm.random_decay_coefficient(2, 2 * N, lam, rng)
    f = field_from_function(Grid(2, 2 * N), lambda x, y: np.cos(x) + np.sin(2 * y))
    atilde, f_N = dm.prepare_coefficients(a, f, N)
    sup = float(np.max(np.abs(resample(atilde, 4 * N).values)))
    lip = dm.empirical_lipschitz(atilde, f_N, rng, pairs=100)
    ok = lip <= sup + 1e-8 and sup + 1e-8 <= 1 - lam / 2
    report(3, ok,
           f"empirical Lip {lip:.4f} <= sup|atilde_N| {sup:.4f} + 1e-8 <= {1 - lam/2}",
           10, time.perf_counter() - t0)


def _taylor_green_slopes(scheme, T, taus, nu=0.05, N=16):
    u0 = ns.taylor_green(nu, 0.0, N)
    errs = []
    for tau in taus:
        cfg = ns.NsConfig(d=2, N=N, nu=nu, T=T, tau=tau, U=l2_norm(u0), u0=u0,
                          enforce_cfl=False)
        run = ns.simulate(cfg, scheme)
        exact = ns.taylor_green(nu, T, N)
        errs.append(l2_norm(GridField(u0.grid, run.final.u.values - exact.values)))
    return float(np.polyfit(np.log(taus), np.log(errs), 1)[0]), errs


def test_c04_ns_first_order_rate():
    t0 = time.perf_counter()
    slope, errs = _taylor_green_slopes("first", T=0.4, taus=[0.04, 0.02, 0.01])
    ok = 0.8 <= slope <= 1.2
    report(4, ok, f"first-order tau-slope {slope:.3f} in [0.8, 1.2], errs {errs[0]:.1e}..{errs[-1]:.1e}",
           60, time.perf_counter() - t0)


def test_c05_ns_second_order_rate():
    t0 = time.perf_counter()
    slope, errs = _taylor_green_slopes("second", T=4.0, taus=[0.04, 0.02, 0.01])
    ok = 1.7 <= slope <= 2.3
    report(5, ok, f"second-order tau-slope {slope:.3f} in [1.7, 2.3], errs {errs[0]:.1e}..{errs[-1]:.1e}",
           90, time.perf_counter() - t0)


def test_c06_ns_stability():
    t0 = time.perf_counter()
    N, U, nu = 8, 0.5, 0.05
    tau = 0.9 * ns.max_cfl_timestep(U, N, 2)
    rng = np.random.default_rng(600)
    u0 = ns.random_divergence_free(Grid(2, N), rng, norm=0.9 * U)
    cfg = ns.NsConfig(d=2, N=N, nu=nu, T=8 * tau, tau=tau, U=U, u0=u0)

    run_ref = ns.simulate(cfg, "first", kappa=60)
    monotone = all(b <= a * (1 + 1e-11) for a, b in zip(run_ref.energies, run_ref.energies[1:]))

    run = ns.simulate(cfg, "first")
    bounded = max(run.energies) <= math.e * run.energies[0] * (1 + 1e-9)

    errs, u_norm = ns.inner_iterate_errors(ns.initial_state(cfg), cfg, kappa_ref=60)
    decay = all(e <= 2.0**-k * u_norm * (1 + 1e-6) for k, e in enumerate(errs[:-1]))

    ok = monotone and bounded and decay
    report(6, ok,
           f"converged-energy monotone: {monotone}, kappa0 bound max/e*E0: "
           f"{max(run.energies) / (math.e * run.energies[0]):.3f} <= 1, "
           f"inner decay 2^-k: {decay}",
           60, time.perf_counter() - t0)


def test_c07_darcy_emulator():
    from psifno.emulation import build_darcy_emulator

    t0 = time.perf_counter()
    lam, k, eps = 0.5, 1, 1e-3
    depth_ratios, width_ratios, worst = [], [], 0.0
    for N in (8, 16, 32):
        f = field_from_function(Grid(2, 2 * N), lambda x, y: np.cos(x) + np.sin(2 * y))
        net = build_darcy_emulator(f, lam, N, k, B=2.0, eps=eps,
                                   rng=np.random.default_rng(700 + N))
        rep = size_report(net)
        depth_ratios.append(rep.depth / np.log(N))
        width_ratios.append(rep.width / (4 * N + 1) ** 2)
        rng = np.random.default_rng(7000 + N)
        for _ in range(20):
            a = dm.random_decay_coefficient(2, 2 * N, lam, rng)
            sol = dm.solve(dm.DarcyProblem(a, f, lam, k, N))
            got = fno_forward(net, a)
            worst = max(worst, dm.h1_error_against(got, resample(sol.u, 2 * N)))
    ok = (worst <= eps
          and max(depth_ratios) / min(depth_ratios) < 2.0
          and max(width_ratios) / min(width_ratios) < 1.5)
    report(7, ok,
           f"worst probe H1 err {worst:.2e} <= {eps}, depth/logN in "
           f"[{min(depth_ratios):.2f}, {max(depth_ratios):.2f}], width/N^d ratio "
           f"{max(width_ratios)/min(width_ratios):.3f}",
           300, time.perf_counter() - t0)


def test_c08_ns_emulator():
    from psifno.emulation import build_ns_emulator

    t0 = time.perf_counter()
    N, nu, n_T, eps_total = 8, 0.05, 4, 1e-3
    u0 = ns.taylor_green(nu, 0.0, N, amplitude=0.1)
    U = 2.0 * l2_norm(u0)
    tau = 0.9 * ns.max_cfl_timestep(U, N, 2)
    cfg = ns.NsConfig(d=2, N=N, nu=nu, T=n_T * tau, tau=tau, U=U, u0=u0)
    net = build_ns_emulator(cfg, eps_total=eps_total, rng=np.random.default_rng(800))

    inits = [u0] + [
        ns.random_divergence_free(Grid(2, N), np.random.default_rng(810 + i), norm=0.8 * U)
        for i in range(5)
    ]
    worst = 0.0
    for v0 in inits:
        c2 = ns.NsConfig(d=2, N=N, nu=nu, T=cfg.T, tau=tau, U=U, u0=v0)
        run = ns.simulate(c2, "first")
        got = fno_forward(net, v0)
        diff = GridField(got.grid, got.values - resample(run.final.u, 2 * N).values)
        worst = max(worst, l2_norm(diff))
    ok = worst <= eps_total
    report(8, ok,
           f"trajectory-end discrepancy {worst:.2e} <= eps_total {eps_total} "
           f"on Taylor-Green + 5 random fields",
           300, time.perf_counter() - t0)


def test_c09_ft_ift_emulators():
    from psifno.emulation import build_ft_emulator, build_ift_emulator

    t0 = time.perf_counter()
    eps, B = 1e-3, 1.0
    worst_coeff, worst_comp = 0.0, 0.0
    for d, N in ((1, 4), (2, 2), (2, 4)):
        rng = np.random.default_rng(900 + 10 * d + N)
        ft = build_ft_emulator(N, B=B, eps=eps / 2, d=d, rng=rng)
        ift = build_ift_emulator(N, B=B, eps=eps / 2, d=d, rng=rng)
        pipe = compose(ift, ft)
        g = Grid(d, N)
        for _ in range(10):
            v = idft(random_hermitian_coeffs(g, rng))
            v = GridField(g, v.values * (0.9 * B / (l2_norm(v) or 1.0)))
            want = dft(v).coeffs[..., 0].ravel()
            out = fno_forward(ft, v).values.reshape(-1, 2 * g.size).mean(axis=0)
            got = out[0::2] + 1j * out[1::2]
            worst_coeff = max(worst_coeff, float(np.max(np.abs(got - want))))
            back = fno_forward(pipe, v)
            cdiff = dft(GridField(g, back.values - v.values)).coeffs
            worst_comp = max(worst_comp, float(np.max(np.abs(cdiff))))
    ok = worst_coeff <= eps and worst_comp <= eps
    report(9, ok,
           f"sup coefficient err {worst_coeff:.2e} <= {eps}, "
           f"ift(ft(v)) vs P_N v coefficient err {worst_comp:.2e} <= {eps}",
           60, time.perf_counter() - t0)


def test_c10_deeponet_export():
    from psifno.deeponet import to_deeponet
    from psifno.fno import FnoLayer, FourierMultiplier, PsiFno

    t0 = time.perf_counter()
    g = Grid(1, 3)
    rng = np.random.default_rng(1000)
    d_v = 3
    layers = []
    for _ in range(2):
        w = rng.standard_normal((d_v, d_v)) / d_v
        raw = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        s = 0.5 * (raw + np.conj(np.flip(raw)))
        mult = FourierMultiplier(1, g.N, [(s, rng.standard_normal((d_v, d_v)) / d_v)], d_v)
        layers.append(FnoLayer(d_v, w, random_field(g, rng, channels=d_v), mult, True))
    net = PsiFno(g, rng.standard_normal((d_v, 1)), tuple(layers),
                 rng.standard_normal((1, d_v)) / d_v)
    export = to_deeponet(net, B=1.0, rng=rng)

    worst = 0.0
    for seed in range(100):
        r2 = np.random.default_rng(seed)
        a = idft(random_hermitian_coeffs(g, r2))
        out = fno_forward(net, a)
        pts = r2.uniform(0, 2 * np.pi, size=(2, 1))
        want = evaluate(out, pts)
        got = export.evaluate(a, pts)
        scale = max(float(np.max(np.abs(out.values))), 1e-30)
        worst = max(worst, float(np.max(np.abs(got - want))) / scale)
    widths = export.width == d_v * g.size
    depths = export.depth == net.depth
    ok = worst <= 1e-9 and widths and depths
    report(10, ok,
           f"off-grid agreement {worst:.1e} <= 1e-9 on 100 probes, "
           f"width equality {widths}, depth equality {depths}",
           30, time.perf_counter() - t0)


def test_c11_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "schema": "psifno-experiment/1", "kind": "spectral-check",
        "seed": 11, "params": {},
    }))
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(["spectral-check", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        blobs.append((out / "spectral-check.csv").read_bytes()
                     + (out / "spectral-check_summary.json").read_bytes())
    ok = blobs[0] == blobs[1]
    report(11, ok, "criterion-suite rerun is byte-identical (CSV + summary)",
           5, time.perf_counter() - t0)
