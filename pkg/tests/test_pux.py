"""Tests for the partition-of-unity extension."""

import io

import numpy as np
import pytest

from helmflow import geom, pux


from functools import lru_cache


@lru_cache(maxsize=None)
def starfish_setup(N, L=4.0, n_pan=200):
    curve = geom.StarfishCurve(a=0.3, b=5, center=-0.1045 + 5j / 439)
    bd = geom.build_panels(curve, n_pan)
    grid = geom.UniformGrid(L, N)
    mask = geom.classify_points(bd, grid.points, grid.dx)
    return bd, grid, mask


def smooth_field(pts):
    return (np.sin(pts[:, 0]) * np.sin(pts[:, 1])
            * np.exp(-(pts[:, 0]**2 + pts[:, 1]**2) / 10.0))


def test_vogel_nodes_cover_unit_disc():
    nodes = pux.vogel_nodes(60)
    r = np.linalg.norm(nodes, axis=1)
    assert nodes.shape == (60, 2)
    assert r.max() <= 1.0 + 1e-12
    assert r.min() > 0.0
    # radii follow sqrt(i/n)
    assert np.allclose(np.sort(r), np.sqrt(np.arange(1, 61) / 60.0))
    # pairwise distinct
    d = np.linalg.norm(nodes[:, None] - nodes[None, :], axis=-1)
    np.fill_diagonal(d, 1.0)
    assert d.min() > 1e-2


def test_wu_functions_support_and_smoothness():
    r = np.linspace(0, 1.5, 301)
    for q in range(1, 6):
        psi = pux.wu_eval(q, r)
        assert np.all(psi >= 0.0)
        assert np.all(psi[r >= 1.0] == 0.0)
        assert psi[0] > 0.0
        # vanishing derivative at r=1 from inside (smooth cutoff)
        h = 1e-4
        assert abs(pux.wu_eval(q, 1 - h) - pux.wu_eval(q, 1 - 2 * h)) < 1e-4
    with pytest.raises(ValueError):
        pux.wu_eval(6, 0.5)


def test_shepard_weights_sum_to_one():
    rng = np.random.default_rng(3)
    centers = rng.uniform(-1, 1, size=(12, 2))
    pts = rng.uniform(-0.3, 0.3, size=(200, 2))
    r = np.linalg.norm(pts[:, None] - centers[None], axis=-1) / 1.2
    psi = pux.wu_eval(3, r)
    w = psi / psi.sum(axis=1, keepdims=True)
    assert np.abs(w.sum(axis=1) - 1.0).max() < 1e-14


def test_operator_reproduces_basis_gaussian():
    op = pux.build_interpolation_operator(0.15, 0.0125)
    # data = first basis Gaussian sampled at the centers
    d2 = ((op.centers - op.centers[0])**2).sum(axis=1)
    fc = np.exp(-op.shape**2 * d2)
    pred = op.A @ fc
    pts = op.offsets * op.dx
    direct = np.exp(-op.shape**2 * ((pts - op.centers[0])**2).sum(axis=1))
    assert np.abs(pred - direct).max() < 1e-6


def test_operator_interpolates_smooth_data():
    op = pux.build_interpolation_operator(0.15, 0.0125)
    pts = op.offsets * op.dx
    f = lambda p: np.sin(3 * p[:, 0]) * np.cos(2 * p[:, 1])
    pred = op.A @ f(op.centers)
    assert np.abs(pred - f(pts)).max() < 1e-6


def test_operator_rejects_degenerate_basis():
    # much flatter Gaussians push the effective rank below n_g / 2
    with pytest.raises(ValueError):
        pux.build_interpolation_operator(0.15, 0.0125, shape=0.5)


def test_operator_for_grid_rejects_coarse_grid():
    with pytest.raises(ValueError):
        pux.operator_for_grid(0.15, 0.05)


def test_local_extension_requires_interior_data():
    bd, grid, mask = starfish_setup(160)
    op = pux.operator_for_grid(0.16, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    # guard triggers with an artificially emptied partition
    layout.part_inside[0][:] = False
    with pytest.raises(ValueError):
        pux.local_extension(op, layout, 0, smooth_field(grid.points))


def test_global_extension_matches_inside_exactly():
    bd, grid, mask = starfish_setup(160)
    f = smooth_field(grid.points)
    op = pux.operator_for_grid(0.16, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    fe = pux.global_extension(op, layout, mask, f)
    assert np.array_equal(fe[mask], f[mask])
    # compactly supported: zero well away from the domain
    d, _ = bd.nearest_node(grid.points)
    far = ~mask & (d > 3 * 0.16)
    assert np.all(fe[far] == 0.0)


def test_fill_slice_accuracy():
    bd, grid, mask = starfish_setup(320)
    f = smooth_field(grid.points)
    op = pux.operator_for_grid(0.15, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    d, _ = bd.nearest_node(grid.points)
    band = np.flatnonzero(~mask & (d < 1.5 * grid.dx))
    vals = pux.fill_slice(op, layout, mask, f, band)
    assert np.abs(vals - f[band]).max() < 1e-7


def test_fill_slice_rejects_uncovered_point():
    bd, grid, mask = starfish_setup(160)
    f = smooth_field(grid.points)
    op = pux.operator_for_grid(0.16, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    corner = np.array([0])  # grid corner, far outside the partition cover
    with pytest.raises(ValueError):
        pux.fill_slice(op, layout, mask, f, corner)


def test_extension_of_constant_is_constant_on_slice():
    bd, grid, mask = starfish_setup(320)
    op = pux.operator_for_grid(0.15, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    ones = np.ones(grid.n**2)
    d, _ = bd.nearest_node(grid.points)
    band = np.flatnonzero(~mask & (d < 1.5 * grid.dx))
    vals = pux.fill_slice(op, layout, mask, ones, band)
    assert np.abs(vals - 1.0).max() < 5e-8


@pytest.mark.slow
def test_fourier_decay_order():
    bd, grid, mask = starfish_setup(640)
    f = smooth_field(grid.points)
    op = pux.operator_for_grid(0.15, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    fe = pux.global_extension(op, layout, mask, f, q=3)
    n = grid.n
    Fh = np.fft.fft2(fe.reshape(n, n)) / n**2
    k = np.fft.fftfreq(n) * n
    K = np.maximum(np.abs(k)[:, None], np.abs(k)[None, :])

    def shell_max(kk):
        return np.abs(Fh[(K >= kk - 2) & (K < kk + 2)]).max()

    k1, k2 = 60.0, 300.0
    slope = np.log(shell_max(k1) / shell_max(k2)) / np.log(k2 / k1)
    # blending with q = 3 should give coefficient decay of order >= q + 2
    assert slope >= 5.0


def test_layout_zero_partitions_clear_of_domain():
    bd, grid, mask = starfish_setup(320)
    op = pux.operator_for_grid(0.15, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    assert layout.n_ext == int(np.ceil(bd.arclength / (0.75 * 0.15)))
    # every zero-partition disc stays clear of the closed domain
    d, _ = bd.nearest_node(layout.centers_zero)
    assert d.min() >= 0.15
    assert not geom.classify_points(bd, layout.centers_zero, grid.dx).any()
    # extension centers are interior grid nodes
    flat = layout.center_idx[:, 0] * grid.n + layout.center_idx[:, 1]
    assert mask[flat].all()


def test_layout_csv():
    bd, grid, mask = starfish_setup(160)
    op = pux.operator_for_grid(0.16, grid.dx)
    layout = pux.build_layout(op, bd, grid, mask)
    buf = io.StringIO()
    pux.write_layout_csv(buf, layout)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "kind,x1,x2"
    kinds = [ln.split(",")[0] for ln in lines[1:]]
    assert kinds.count("extension") == layout.n_ext
    assert kinds.count("zero") == len(layout.centers_zero)
