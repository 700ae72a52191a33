import numpy as np
import pytest

from psifno.deeponet import (
    build_trunk_networks,
    gram_defect,
    load_deeponet,
    save_deeponet,
    to_deeponet,
    trigonometric_basis,
)
from psifno.errors import BadParameters
from psifno.fno import FnoLayer, FourierMultiplier, PsiFno, fno_forward
from psifno.spectral import (
    Grid,
    evaluate,
    idft,
    random_field,
    random_hermitian_coeffs,
    resample,
)

from helpers import rel_err


def small_random_net(grid, rng, d_a=1, d_v=3, d_u=1, depth=2):
    layers = []
    for _ in range(depth):
        w = rng.standard_normal((d_v, d_v)) / d_v
        raw = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        s = 0.5 * (raw + np.conj(np.flip(raw, axis=tuple(range(grid.d)))))
        mult = FourierMultiplier(grid.d, grid.N, [(s, rng.standard_normal((d_v, d_v)) / d_v)], d_v)
        layers.append(FnoLayer(d_v, w, random_field(grid, rng, channels=d_v), mult, True))
    R = rng.standard_normal((d_v, d_a))
    Q = rng.standard_normal((d_u, d_v)) / d_v
    return PsiFno(grid, R, tuple(layers), Q)


def identity_net(grid):
    return PsiFno(grid, np.eye(1), (FnoLayer(1, np.eye(1), None, None, False),), np.eye(1))


class TestBasis:
    def test_count_matches_mode_set(self):
        for d, N in [(1, 3), (2, 2)]:
            basis = trigonometric_basis(Grid(d, N))
            assert len(basis) == (2 * N + 1) ** d

    def test_orthonormal(self):
        g = Grid(2, 2)
        export = to_deeponet(identity_net(g), B=1.0)
        assert gram_defect(export) <= 1e-10


class TestToDeeponet:
    def test_identity_net_reproduces_interpolant_off_grid(self):
        g = Grid(1, 3)
        rng = np.random.default_rng(0)
        a = random_field(Grid(1, 7), rng)
        export = to_deeponet(identity_net(g), B=1.0, rng=rng)
        pts = rng.uniform(0, 2 * np.pi, size=(12, 1))
        want = evaluate(resample(a, 3), pts)
        got = export.evaluate(resample(a, 3), pts)
        assert np.max(np.abs(got - want)) <= 1e-10 * max(np.max(np.abs(want)), 1.0)

    def test_random_net_off_grid_agreement(self):
        g = Grid(1, 2)
        rng = np.random.default_rng(1)
        net = small_random_net(g, rng)
        export = to_deeponet(net, B=1.0, rng=rng)
        worst = 0.0
        for seed in range(100):
            r2 = np.random.default_rng(seed)
            a = idft(random_hermitian_coeffs(g, r2))
            out = fno_forward(net, a)
            pts = r2.uniform(0, 2 * np.pi, size=(1, 1))
            want = evaluate(out, pts)
            scale = max(np.max(np.abs(out.values)), 1e-30)
            got = export.evaluate(a, pts)
            worst = max(worst, np.max(np.abs(got - want)) / scale)
        assert worst <= 1e-9

    def test_2d_multichannel(self):
        g = Grid(2, 1)
        rng = np.random.default_rng(2)
        net = small_random_net(g, rng, d_a=2, d_v=3, d_u=2)
        export = to_deeponet(net, B=1.0, rng=rng)
        a = random_field(g, rng, channels=2)
        out = fno_forward(net, a)
        pts = rng.uniform(0, 2 * np.pi, size=(7, 2))
        want = evaluate(out, pts)
        got = export.evaluate(a, pts)
        assert rel_err(got, want) <= 1e-9

    def test_width_depth_equalities(self):
        g = Grid(1, 2)
        rng = np.random.default_rng(3)
        net = small_random_net(g, rng, d_v=4, depth=3)
        export = to_deeponet(net, B=1.0, rng=rng)
        assert export.width == 4 * g.size
        assert export.depth == 3
        assert export.p == 1 * g.size

    def test_sensor_points_are_the_grid(self):
        g = Grid(1, 2)
        export = to_deeponet(identity_net(g), B=1.0)
        assert export.sensor_points.shape == (5, 1)
        assert np.allclose(export.sensor_points[:, 0], g.axis_coordinates())

    def test_b_bar_positive_and_recorded(self):
        g = Grid(1, 1)
        export = to_deeponet(identity_net(g), B=2.0)
        assert export.B_bar > 0
        assert export.meta["B"] == 2.0


class TestSerialization:
    def test_round_trip(self, tmp_path):
        g = Grid(1, 2)
        rng = np.random.default_rng(4)
        net = small_random_net(g, rng)
        export = to_deeponet(net, B=1.0, rng=rng)
        save_deeponet(export, net, tmp_path / "model")
        again = load_deeponet(tmp_path / "model")
        a = random_field(g, np.random.default_rng(5))
        pts = np.array([[0.3], [5.1]])
        assert rel_err(again.evaluate(a, pts), export.evaluate(a, pts)) < 1e-12
        assert again.p == export.p

    def test_json_descriptor_fields(self, tmp_path):
        import json

        g = Grid(1, 1)
        net = identity_net(g)
        export = to_deeponet(net, B=1.0)
        save_deeponet(export, net, tmp_path / "model")
        doc = json.loads((tmp_path / "model.deeponet.json").read_text())
        assert set(doc) >= {"p", "d_u", "sensor_points", "trunk", "branch"}
        assert (tmp_path / "model.psifno").exists()


class TestApproximateTrunk:
    def test_verified_bound(self):
        g = Grid(1, 1)
        export = to_deeponet(identity_net(g), B=1.0)
        eps = 0.02 * export.B_bar
        nets, bound = build_trunk_networks(export, eps)
        assert len(nets) == len(export.trunk)
        assert bound <= eps / export.B_bar

    def test_end_to_end_with_approximate_trunk(self):
        g = Grid(1, 1)
        rng = np.random.default_rng(6)
        net = small_random_net(g, rng, d_v=2, depth=1)
        export = to_deeponet(net, B=1.0, rng=rng)
        eps = 0.05 * export.B_bar
        nets, _ = build_trunk_networks(export, eps)
        a = idft(random_hermitian_coeffs(g, rng))
        pts = rng.uniform(0, 2 * np.pi, size=(50, 1))
        beta = export.branch_coefficients(a)
        approx_T = np.stack([tn(pts)[:, 0] for tn in nets], axis=-1)
        got = approx_T @ beta
        want = evaluate(fno_forward(net, a), pts)
        assert np.max(np.abs(got - want)) <= eps

    def test_unreachable_bound_raises(self):
        g = Grid(1, 2)
        export = to_deeponet(identity_net(g), B=1.0)
        # target below the staircase floor for a sane unit count is detected
        with pytest.raises(BadParameters):
            build_trunk_networks(export, eps=1e-13 * export.B_bar)
