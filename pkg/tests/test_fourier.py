import numpy as np
import pytest

from helmflow.fourier import PeriodicSpectralSolver
from helmflow.gridding import GaussianWindow


def grid_points(solver):
    x = solver.origin + solver.dx * np.arange(solver.n)
    return np.meshgrid(x, x, indexing="ij")


def test_eigenfunction_solve_exact():
    n, L = 64, 2.0
    solver = PeriodicSpectralSolver(n, L / n)
    X, Y = grid_points(solver)
    alpha = 3.0
    k1 = 2.0 * np.pi * 4 / L
    k2 = 2.0 * np.pi * 7 / L
    u_exact = np.cos(k1 * X) * np.sin(k2 * Y)
    f = (alpha**2 + k1**2 + k2**2) * u_exact
    u, ux, uy, _ = solver.solve_particular(f, alpha)
    assert np.max(np.abs(u - u_exact)) < 1e-13
    assert np.max(np.abs(ux + k1 * np.sin(k1 * X) * np.sin(k2 * Y))) < 1e-12
    assert np.max(np.abs(uy - k2 * np.cos(k1 * X) * np.cos(k2 * Y))) < 1e-12


def test_smooth_field_solve_converged():
    # resolved Gaussian bump: refining the grid does not change the answer
    alpha = 2.0
    L = 4.0
    vals = {}
    for n in (128, 192):
        solver = PeriodicSpectralSolver(n, L / n)
        X, Y = grid_points(solver)
        f = np.exp(-8.0 * ((X - 0.3) ** 2 + (Y + 0.2) ** 2))
        u, _, _, uhat = solver.solve_particular(f, alpha)
        vals[n] = solver.eval_at_points(uhat, [[0.11, -0.37]], fast=False)[0]
    assert abs(vals[128] - vals[192]) < 1e-12


def test_fast_eval_matches_direct():
    rng = np.random.default_rng(7)
    n, L = 64, 3.0
    solver = PeriodicSpectralSolver(n, L / n, origin=-1.1)
    X, Y = grid_points(solver)
    f = np.exp(-6.0 * ((X + 0.2) ** 2 + Y**2)) + 0.5 * np.cos(
        2.0 * np.pi * (X + 1.1) / L
    )
    _, _, _, uhat = solver.solve_particular(f, 1.5)
    pts = solver.origin + L * rng.random((300, 2))
    direct = solver.eval_at_points(uhat, pts, fast=False)
    fast = solver.eval_at_points(uhat, pts, fast=True)
    assert np.max(np.abs(fast - direct)) < 1e-11 * max(1.0, np.max(np.abs(direct)))


def test_gradient_coefficients_eval():
    n, L = 96, 2.0 * np.pi
    solver = PeriodicSpectralSolver(n, L / n)
    X, Y = grid_points(solver)
    u = np.sin(2 * X) * np.cos(3 * Y)
    uhat = np.fft.fft2(u)
    gx, gy = solver.gradient_coefficients(uhat)
    pts = np.array([[0.3, -0.7], [1.2, 2.5], [-2.0, 0.1]])
    vx = solver.eval_at_points(gx, pts, fast=False)
    vy = solver.eval_at_points(gy, pts, fast=False)
    assert np.allclose(vx, 2 * np.cos(2 * pts[:, 0]) * np.cos(3 * pts[:, 1]), atol=1e-12)
    assert np.allclose(vy, -3 * np.sin(2 * pts[:, 0]) * np.sin(3 * pts[:, 1]), atol=1e-12)


def test_window_spread_gather_symmetry():
    # <spread(q), H> = <q, gather(H)> up to the quadrature weight h^2
    rng = np.random.default_rng(1)
    win = GaussianWindow(48, 2.0)
    pts = -1.0 + 2.0 * rng.random((20, 2))
    q = rng.standard_normal(20)
    H = rng.standard_normal((48, 48))
    lhs = np.sum(win.spread(pts, q) * H) * win.h**2
    rhs = np.dot(q, win.gather(pts, H))
    assert abs(lhs - rhs) < 1e-12 * max(abs(lhs), 1.0)


def test_window_fourier_weights():
    # numerical transform of the window matches the analytic formula
    win = GaussianWindow(64, 2.0)
    x = np.linspace(-1.0, 1.0, 4001)
    w = np.exp(-win.a * x**2)
    for k in (0.0, 3.0, 11.0):
        num = np.trapezoid(w * np.cos(k * x), x)
        ana = np.sqrt(np.pi / win.a) * np.exp(-(k**2) / (4 * win.a))
        assert abs(num - ana) < 1e-12
