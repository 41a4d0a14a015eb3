"""Benchmark problem definitions: velocity fields, moving geometries,
exact solutions, and the disk heat-flow series reference.

Oracles: the series reference is checked against a closed-form
eigenfunction of the disk Neumann Laplacian, mass values against exact
integrals done by hand, and exact solutions against finite-difference
residuals of the PDE they claim to satisfy.
"""

import numpy as np
import pytest
from scipy.special import j0, jnp_zeros

from helmflow import geom
from helmflow.problems import (
    VelocityField, RotatedCurve, TranslatedCurve,
    RotatingSolutionProblem, DiffusingDropProblem, DeformingDropProblem,
    RobustDropProblem, disk_neumann_heat_reference,
)


def _random_points(n, scale=1.3, seed=7):
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(n, 2))


class TestVelocityField:
    @pytest.mark.parametrize("field", [
        VelocityField.rotation(2.0),
        VelocityField.translation(0.3, -1.1),
        VelocityField.extensional(),
        VelocityField.superposition(VelocityField.rotation(1.0),
                                    VelocityField.extensional()),
    ], ids=["rotation", "translation", "extensional", "superposition"])
    def test_divergence_free(self, field):
        pts = _random_points(60)
        for t in (0.0, 0.37, 1.9):
            div = field.divergence(t, pts)
            assert np.max(np.abs(div)) < 1e-8

    def test_rotation_values(self):
        field = VelocityField.rotation(3.0)
        pts = np.array([[1.0, 0.0], [0.0, 2.0]])
        v = field(0.0, pts)
        # w * (-x2, x1)
        assert np.allclose(v, [[0.0, 3.0], [-6.0, 0.0]], atol=1e-14)

    def test_extensional_time_modulation(self):
        field = VelocityField.extensional()
        pts = _random_points(20)
        # velocity carries a cos(pi t) factor: vanishes at t = 1/2
        assert np.max(np.abs(field(0.5, pts))) < 1e-14
        assert np.allclose(field(1.0, pts), -field(0.0, pts), atol=1e-14)

    def test_zero_field(self):
        field = VelocityField.zero()
        assert np.max(np.abs(field(1.2, _random_points(10)))) == 0.0


class TestMovingCurves:
    def test_rotated_curve_matches_rotation_matrix(self):
        base = geom.StarfishCurve(a=0.3, b=5)
        theta = 0.8
        cur = RotatedCurve(base, theta)
        t = np.linspace(0.0, 2 * np.pi, 17)
        z0 = base.position(t)
        z1 = cur.position(t)
        assert np.allclose(z1, z0 * np.exp(1j * theta), atol=1e-14)
        # derivatives rotate the same way
        assert np.allclose(cur.derivative(t),
                           base.derivative(t) * np.exp(1j * theta),
                           atol=1e-14)

    def test_translated_curve_shifts_position_only(self):
        base = geom.StarfishCurve(a=0.0, b=5)  # circle
        cur = TranslatedCurve(base, 0.25 - 0.5j)
        t = np.linspace(0.0, 2 * np.pi, 17)
        assert np.allclose(cur.position(t), base.position(t) + 0.25 - 0.5j)
        assert np.allclose(cur.derivative(t), base.derivative(t))
        assert np.allclose(cur.second_derivative(t),
                           base.second_derivative(t))


class TestRotatingSolutionProblem:
    def test_exact_satisfies_pde(self):
        # u_t + v.grad u = eps lap u + F with F = 2 eps u and
        # u = sin(y1) sin(y2) in co-rotating coordinates.
        prob = RotatingSolutionProblem(eps=0.07, w=1.3)
        rng = np.random.default_rng(3)
        pts = rng.uniform(-0.8, 0.8, size=(40, 2))
        t = 0.41
        h = 1e-5
        ut = (prob.exact(t + h, pts) - prob.exact(t - h, pts)) / (2 * h)
        lap = np.zeros(len(pts))
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            lap += (prob.exact(t, pts + e) - 2 * prob.exact(t, pts)
                    + prob.exact(t, pts - e)) / h**2
        grad = prob.exact_gradient(t, pts)
        v = prob.velocity(t, pts)
        resid = ut + np.sum(v * grad, axis=1) \
            - prob.eps * lap - prob.source(t, pts)
        assert np.max(np.abs(resid)) < 1e-5

    def test_neumann_data_matches_gradient(self):
        prob = RotatingSolutionProblem(eps=0.1, w=1.0, n_panels=40)
        t = 0.9
        boundary = prob.boundary_at(t, None)
        g = prob.neumann(t, boundary)
        grad = prob.exact_gradient(t, boundary.x)
        assert np.allclose(g, np.sum(grad * boundary.normal, axis=1),
                           atol=1e-13)

    def test_gradient_consistent_with_values(self):
        prob = RotatingSolutionProblem()
        pts = _random_points(30, scale=0.9)
        t = 0.2
        h = 1e-6
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            fd = (prob.exact(t, pts + e) - prob.exact(t, pts - e)) / (2 * h)
            assert np.max(np.abs(fd - prob.exact_gradient(t, pts)[:, d])) \
                < 1e-8


class TestDiskHeatReference:
    def test_eigenfunction_decays_exactly(self):
        # profile = J0(mu_1 r) is a Neumann eigenfunction of the disk
        # Laplacian with eigenvalue -mu_1^2, so the solution is a pure
        # exponential decay.  Closed form, independent of the quadrature.
        mu1 = jnp_zeros(0, 1)[0]
        eps, t = 0.05, 0.7
        r = np.linspace(0.0, 1.0, 41)
        got = disk_neumann_heat_reference(lambda s: j0(mu1 * s),
                                          eps, t, r, n_modes=40)
        want = np.exp(-eps * mu1**2 * t) * j0(mu1 * r)
        assert np.max(np.abs(got - want)) < 1e-12

    def test_constant_profile_is_steady(self):
        r = np.linspace(0.0, 1.0, 11)
        got = disk_neumann_heat_reference(lambda s: np.full_like(s, 2.5),
                                          0.1, 3.0, r, n_modes=30)
        assert np.max(np.abs(got - 2.5)) < 1e-12

    def test_mean_is_conserved(self):
        # Neumann heat flow preserves the disk average of the profile.
        profile = lambda s: np.cos(2 * np.pi * s) + 1.0
        nodes, w = np.polynomial.legendre.leggauss(200)
        rq = 0.5 * (nodes + 1.0)
        wq = 0.5 * w
        mean0 = 2.0 * np.sum(wq * rq * profile(rq))  # (1/pi) * integral
        for t in (0.1, 1.0, 5.0):
            u = disk_neumann_heat_reference(profile, 0.02, t, rq,
                                            n_modes=120)
            mean_t = 2.0 * np.sum(wq * rq * u)
            assert abs(mean_t - mean0) < 1e-10

    def test_initial_mass_is_pi(self):
        # integral over the unit disk of cos(2 pi r) + 1:
        # 2 pi * [ int_0^1 r cos(2 pi r) dr + 1/2 ] and the cosine
        # integral vanishes ( = [r sin(2pi r)/(2pi) + cos(2pi r)/(4pi^2)]
        # from 0 to 1 = 0 ), leaving exactly pi.
        prob = DiffusingDropProblem()
        nodes, w = np.polynomial.legendre.leggauss(300)
        rq = 0.5 * (nodes + 1.0)
        wq = 0.5 * w
        mass = 2 * np.pi * np.sum(wq * rq * prob.radial_profile(rq))
        assert abs(mass - np.pi) < 1e-12


class TestDiffusingDropProblem:
    def test_initial_data_is_radial_profile(self):
        prob = DiffusingDropProblem()
        pts = _random_points(50, scale=0.7) + np.array([0.0, 1.0])
        r = np.linalg.norm(pts - prob.center(0.0), axis=1)
        assert np.allclose(prob.initial_u(pts), prob.radial_profile(r),
                           atol=1e-13)

    def test_center_traces_unit_circle(self):
        prob = DiffusingDropProblem()
        for t in (0.0, 0.5, 2.0):
            c = prob.center(t)
            assert abs(np.hypot(*c) - 1.0) < 1e-14

    def test_initial_gradient_and_laplacian(self):
        prob = DiffusingDropProblem()
        pts = _random_points(40, scale=0.6) + np.array([0.0, 1.0])
        h = 1e-6
        fd_lap = np.zeros(len(pts))
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            fd = (prob.initial_u(pts + e) - prob.initial_u(pts - e)) / (2 * h)
            assert np.max(np.abs(
                fd - prob.initial_gradient(pts)[:, d])) < 1e-7
        # second differences need a larger h to beat roundoff in u ~ k^2
        h = 1e-4
        for d in range(2):
            e = np.zeros(2)
            e[d] = h
            fd_lap += (prob.initial_u(pts + e) - 2 * prob.initial_u(pts)
                       + prob.initial_u(pts - e)) / h**2
        assert np.max(np.abs(fd_lap - prob.initial_laplacian(pts))) < 1e-3

    def test_exact_matches_initial_at_t0(self):
        prob = DiffusingDropProblem()
        pts = _random_points(30, scale=0.6) + np.array([0.0, 1.0])
        assert np.max(np.abs(prob.exact(0.0, pts, n_modes=160)
                             - prob.initial_u(pts))) < 1e-5


class TestDropGeometries:
    def test_deforming_drop_setup(self):
        prob = DeformingDropProblem()
        b = prob.initial_boundary(0.0)
        r = np.linalg.norm(b.x, axis=1)
        assert np.allclose(r, 1.5, atol=1e-12)
        assert prob.rigid_key is None  # boundary must be re-advected

    def test_robust_drop_setup(self):
        prob = RobustDropProblem()
        b = prob.initial_boundary(0.0)
        r = np.linalg.norm(b.x - np.array([0.0, 0.5]), axis=1)
        assert np.allclose(r, 1.5, atol=1e-12)
        # initial data peaks at the drop center with value 2
        assert abs(prob.initial_u(np.array([[0.0, 0.5]]))[0] - 2.0) < 1e-13
