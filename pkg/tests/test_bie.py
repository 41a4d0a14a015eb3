"""Boundary integral equation: moments, product integration, Nystrom
operator, GMRES solve, and near-boundary potential evaluation."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import k0, k1

from helmflow import geom
from helmflow.bie import (
    N_Q,
    NystromSystem,
    Panel,
    _GL_NODES,
    _GL_WEIGHTS,
    _NODES_TO_MONO,
    _accurate_double_layer_row,
    _accurate_gradient_row,
    _accurate_value_row,
    _bisect_operators,
    apply_double_layer,
    bisect_for_alpha,
    cauchy_moments,
    eval_homogeneous,
    log_moments,
    panels_from_boundary,
    solve_bie,
)


def starfish_boundary(n_panels, a=0.3, b=5):
    return geom.build_panels(geom.StarfishCurve(a=a, b=b), n_panels)


def exterior_point_data(boundary, alpha, ystar):
    """Normal derivative on the boundary of u(x) = K_0(alpha|x-ystar|)/2pi
    for a source ystar outside the domain (so u solves the homogeneous
    equation inside)."""
    dz = boundary.z - ystar
    r = np.abs(dz)
    dn = dz.real * boundary.normal[:, 0] + dz.imag * boundary.normal[:, 1]
    return -alpha * k1(alpha * r) * dn / r / (2.0 * np.pi)


def exterior_point_field(points, alpha, ystar):
    z = points[:, 0] + 1j * points[:, 1]
    dz = z - ystar
    r = np.abs(dz)
    u = k0(alpha * r) / (2.0 * np.pi)
    g = -alpha * k1(alpha * r)[:, None] / (2.0 * np.pi) \
        * np.column_stack([dz.real, dz.imag]) / r[:, None]
    return u, g


# --------------------------------------------------------------------- #
# moments
# --------------------------------------------------------------------- #
class TestMoments:
    def test_log_moment_closed_form_outside(self):
        # int log|y - 2| dy = (1-2)log 1 - (-1-2)log 3 - 2
        assert log_moments(2.0, 1)[0] == pytest.approx(
            3.0 * np.log(3.0) - 2.0, abs=1e-14)

    def test_log_moments_complex_oracle(self):
        # adaptive-quadrature oracle, frozen
        mu = log_moments(0.3 + 0.05j, 16)
        assert mu[0] == pytest.approx(-1.7542647847175417, abs=1e-11)
        assert mu[5] == pytest.approx(-0.12583126264488867, abs=1e-11)
        assert mu[15] == pytest.approx(-0.041336503087541020, abs=1e-11)

    def test_log_moments_quadrature_sweep(self):
        for x in [2.0, -0.7 + 0.001j, 1.5 - 0.2j, 0.9, -3.0, 8.0]:
            mu = log_moments(x, 16)
            for k in range(16):
                ref = quad(lambda y: y**k * np.log(abs(y - x)), -1, 1,
                           limit=400, epsabs=1e-14, epsrel=1e-14)[0]
                assert mu[k] == pytest.approx(ref, abs=2e-12), (x, k)

    def test_log_moment_far_field(self):
        # mu_0 -> 2 log|x| as |x| grows
        assert log_moments(1e6, 1)[0] == pytest.approx(
            2.0 * np.log(1e6), rel=1e-10)

    def test_cauchy_closed_form(self):
        assert cauchy_moments(2.0, 1)[0] == pytest.approx(
            np.log(1.0 / 3.0), abs=1e-14)

    def test_cauchy_forward_recursion_identity(self):
        x = 0.4 + 0.2j
        q = cauchy_moments(x, 12)
        for k in range(11):
            c = (1.0 - (-1.0) ** (k + 1)) / (k + 1)
            assert q[k + 1] == pytest.approx(x * q[k] + c, abs=1e-14)

    def test_cauchy_backward_oracle(self):
        # adaptive-quadrature oracle, frozen (|x| > 1.3 backward branch)
        q = cauchy_moments(1.31 + 0.01j, 16)
        assert q[0] == pytest.approx(
            -2.0079198552403819 + 0.027917905148194415j, abs=1e-12)
        assert q[7] == pytest.approx(
            -0.25354215366145277 + 0.0077546888355489400j, abs=1e-12)
        assert q[15] == pytest.approx(
            -0.14478378583531720 + 0.0047218981446444513j, abs=1e-12)

    def test_cauchy_branch_continuity(self):
        # values on either side of the forward/backward switch agree
        a = cauchy_moments(1.2999 + 0.1j, 16)
        b = cauchy_moments(1.3001 + 0.1j, 16)
        assert np.allclose(a, b, atol=1e-3 * np.max(np.abs(a)))


# --------------------------------------------------------------------- #
# product integration exactness
# --------------------------------------------------------------------- #
class TestProductIntegration:
    def test_log_quadrature_exact_per_degree(self):
        # on the straight panel z = t the corrected rule integrates
        # t^k log|t - x| exactly for every k <= 15
        from helmflow.bie import _log_pi_row

        panel = Panel(_GL_NODES.astype(complex), np.ones(N_Q, complex))
        for x in [0.2, -0.77, 1.6, 0.3 + 0.08j]:
            row = _log_pi_row(panel, x, complex(x), np.ones(N_Q))
            for k in range(16):
                val = row @ _GL_NODES**k
                assert val == pytest.approx(log_moments(x, 16)[k], abs=5e-12)

    def test_monomial_conversion(self):
        # the node-to-monomial map reproduces polynomial coefficients
        rng = np.random.default_rng(7)
        c = rng.standard_normal(16)
        vals = np.polyval(c[::-1], _GL_NODES)
        assert np.allclose(_NODES_TO_MONO @ vals, c, atol=1e-9)


# --------------------------------------------------------------------- #
# kernel diagonal limit
# --------------------------------------------------------------------- #
class TestDiagonalLimit:
    @pytest.mark.parametrize("a", [0.0, 0.3])
    def test_self_limit_is_minus_half_curvature(self, a):
        curve = geom.StarfishCurve(a=a, b=5)
        alpha = 2.0
        t0 = 0.7
        x = curve.position(t0)
        zp = curve.derivative(t0)
        nrm = -1j * zp / abs(zp)
        kappa = np.imag(np.conj(zp) * curve.second_derivative(t0)) / abs(zp) ** 3
        vals = []
        for h in [1e-4, -1e-4]:
            y = curve.position(t0 + h)
            dz = y - x
            r = abs(dz)
            vals.append(alpha * k1(alpha * r)
                        * (dz.real * nrm.real + dz.imag * nrm.imag) / r)
        # symmetric average cancels the O(h) term
        assert 0.5 * (vals[0] + vals[1]) == pytest.approx(
            -0.5 * kappa, abs=1e-6)


# --------------------------------------------------------------------- #
# bisection
# --------------------------------------------------------------------- #
class TestBisection:
    def test_child_count(self):
        b = starfish_boundary(40)
        panel = panels_from_boundary(b)[0]
        ell = panel.arclength
        for alpha in [1.0, 50.0, 200.0]:
            pieces = bisect_for_alpha(panel, np.ones(N_Q), alpha)
            depth = max(0, int(np.ceil(np.log2(alpha * ell / 4.0))))
            assert len(pieces) == 2**depth

    def test_depth_error(self):
        panel = Panel(_GL_NODES.astype(complex), np.ones(N_Q, complex))
        with pytest.raises(RuntimeError, match="depth"):
            bisect_for_alpha(panel, np.ones(N_Q), 1e12)

    def test_density_interpolation_preserves_integral(self):
        b = starfish_boundary(40)
        panel = panels_from_boundary(b)[3]
        sigma = np.cos(3.0 * _GL_NODES) + 0.2 * _GL_NODES**2
        parent = np.sum(sigma * panel.speed * _GL_WEIGHTS)
        total = sum(np.sum(s * p.speed * _GL_WEIGHTS)
                    for p, s in bisect_for_alpha(panel, sigma, 200.0))
        assert total == pytest.approx(parent, rel=1e-12)

    def test_high_alpha_row_oracle(self):
        # on-surface operator row against adaptive quadrature at alpha=200
        alpha = 200.0
        curve = geom.StarfishCurve(a=0.3, b=5)
        b = geom.build_panels(curve, 40)
        panel = panels_from_boundary(b)[0]
        m = 7
        z0 = b.z[m]
        nx = b.normal[m, 0] + 1j * b.normal[m, 1]
        a_, c_ = b.panel_breaks[0], b.panel_breaks[1]
        t0 = (2.0 * b.param[m] - a_ - c_) / (c_ - a_)
        dens = lambda t: 1.0 + 0.5 * np.cos(3 * t) + 0.2 * np.sin(7 * t)
        sigma = dens(b.param[:N_Q])
        val = _accurate_double_layer_row(
            panel, z0, nx, alpha, t0, b.kappa[m]) @ sigma

        def f(t):
            y = curve.position(t)
            dz = y - z0
            r = abs(dz)
            if r < 1e-14:
                return 0.0
            return (alpha * k1(alpha * r)
                    * (dz.real * nx.real + dz.imag * nx.imag) / r
                    * dens(t) * abs(curve.derivative(t)))

        tm = b.param[m]
        ref = (quad(f, a_, tm, limit=4000, epsabs=1e-14)[0]
               + quad(f, tm, c_, limit=4000, epsabs=1e-14)[0])
        assert val == pytest.approx(ref, abs=1e-9)


# --------------------------------------------------------------------- #
# Nystrom operator and solve
# --------------------------------------------------------------------- #
class TestNystrom:
    def test_operator_row_oracle(self):
        # full operator applied to a smooth density against adaptive
        # quadrature of the layer integral around the target node
        alpha = 3.0
        curve = geom.StarfishCurve(a=0.3, b=5)
        b = geom.build_panels(curve, 40)
        dens = lambda t: 1.0 + 0.5 * np.cos(3 * t) + 0.2 * np.sin(7 * t)
        sigma = dens(b.param)
        out = apply_double_layer(b, sigma, alpha)
        for m in [0, 7, 333]:
            z0 = b.z[m]
            nx = b.normal[m, 0] + 1j * b.normal[m, 1]

            def f(t):
                y = curve.position(t)
                dz = y - z0
                r = abs(dz)
                if r < 1e-12:
                    return 0.0
                return (alpha * k1(alpha * r)
                        * (dz.real * nx.real + dz.imag * nx.imag) / r
                        * dens(t) * abs(curve.derivative(t)))

            tm = b.param[m]
            val = sum(quad(f, lo, hi, limit=4000, epsabs=1e-13)[0]
                      for lo, hi in [(tm - np.pi, tm - 1e-12),
                                     (tm + 1e-12, tm + np.pi)])
            ref = 0.5 * sigma[m] + val / (2.0 * np.pi)
            assert out[m] == pytest.approx(ref, abs=5e-9)

    def test_greens_representation_identity(self):
        # boundary data from an exterior point source is reproduced in the
        # interior through solve + evaluate
        alpha = 3.0
        b = starfish_boundary(80)
        ystar = 2.5 + 1.2j
        rhs = exterior_point_data(b, alpha, ystar)
        sigma, info = solve_bie(b, rhs, alpha)
        assert info["residual"] < 1e-11
        targets = np.array([[0.1, 0.2], [0.5, -0.3], [-0.6, 0.1], [0.0, 0.85]])
        u, g = eval_homogeneous(b, sigma, targets, alpha)
        ue, ge = exterior_point_field(targets, alpha, ystar)
        assert np.max(np.abs(u - ue)) < 1e-9
        assert np.max(np.abs(g - ge)) < 1e-9

    def test_gmres_iterations_stable_under_refinement(self):
        alpha = 10.0
        ystar = 2.5 + 1.2j
        iters = []
        for n_pan in [50, 100]:
            b = starfish_boundary(n_pan)
            rhs = exterior_point_data(b, alpha, ystar)
            _, info = solve_bie(b, rhs, alpha)
            iters.append(info["iterations"])
        assert abs(iters[0] - iters[1]) <= 2

    def test_zero_rhs_gives_zero_density(self):
        b = starfish_boundary(20)
        sigma, info = solve_bie(b, np.zeros(b.size), 3.0)
        assert np.all(sigma == 0.0)
        assert info["iterations"] == 0

    def test_nonfinite_rhs_raises(self):
        b = starfish_boundary(20)
        sys_ = NystromSystem(b, 3.0)
        rhs = np.zeros(b.size)
        rhs[0] = np.nan
        with pytest.raises(ValueError):
            sys_.solve(rhs)

    def test_split_term_logging(self):
        b = starfish_boundary(20)
        sys_ = NystromSystem(b, 30.0, log_split_terms=True)
        assert len(sys_.split_records) > 0
        rec = max(sys_.split_records, key=lambda r: r["log_term"])
        assert rec["log_term"] > 0.0
        assert "smooth_term" in rec and "node" in rec


# --------------------------------------------------------------------- #
# near-boundary evaluation
# --------------------------------------------------------------------- #
class TestNearEvaluation:
    def test_near_target_value_and_gradient_oracle(self):
        # target at 0.1 panel arclengths from the panel; adaptive
        # quadrature oracle on that panel
        alpha = 10.0
        curve = geom.StarfishCurve(a=0.3, b=5)
        b = geom.build_panels(curve, 40)
        panels = panels_from_boundary(b)
        ip = 3
        panel = panels[ip]
        nmid = b.normal[16 * ip + 8]
        zt = panel.midpoint - 0.1 * panel.arclength * (nmid[0] + 1j * nmid[1])
        dens = lambda t: 1.0 + 0.5 * np.cos(3 * t) + 0.2 * np.sin(7 * t)
        sigma = dens(b.param[16 * ip: 16 * (ip + 1)])
        t0 = panel.preimage(zt)
        a_, c_ = b.panel_breaks[ip], b.panel_breaks[ip + 1]

        valv = _accurate_value_row(panel, zt, alpha, t0) @ sigma
        refv = quad(lambda t: k0(alpha * abs(curve.position(t) - zt))
                    * dens(t) * abs(curve.derivative(t)),
                    a_, c_, limit=4000, epsabs=1e-14)[0]
        assert valv == pytest.approx(refv, abs=1e-10)

        valg = _accurate_gradient_row(panel, zt, alpha, t0) @ sigma

        def fg(t, comp):
            y = curve.position(t)
            dz = y - zt
            r = abs(dz)
            v = alpha * k1(alpha * r) * dz / r * dens(t) * abs(curve.derivative(t))
            return v.real if comp == 0 else v.imag

        refg = (quad(lambda t: fg(t, 0), a_, c_, limit=4000, epsabs=1e-14)[0]
                + 1j * quad(lambda t: fg(t, 1), a_, c_, limit=4000,
                            epsabs=1e-14)[0])
        assert abs(valg - refg) < 1e-10

    def test_eval_matches_direct_everywhere(self):
        # interior field from a solved density agrees with the exact field
        # both close to and far from the boundary
        alpha = 10.0
        b = starfish_boundary(60)
        ystar = 2.5 + 1.2j
        rhs = exterior_point_data(b, alpha, ystar)
        sigma, _ = solve_bie(b, rhs, alpha)
        # ray of targets approaching the boundary lobe tip at angle 0
        ts = np.linspace(0.0, 1.25, 12)
        targets = np.column_stack([ts, np.zeros_like(ts)])
        u, g = eval_homogeneous(b, sigma, targets, alpha)
        ue, ge = exterior_point_field(targets, alpha, ystar)
        assert np.max(np.abs(u - ue)) < 1e-9
        assert np.max(np.abs(g - ge)) < 1e-8

    def test_eval_with_ewald_plan(self):
        from helmflow.ewald import select_parameters

        alpha = 10.0
        b = starfish_boundary(40)
        ystar = 2.5 + 1.2j
        rhs = exterior_point_data(b, alpha, ystar)
        sigma, _ = solve_bie(b, rhs, alpha)
        rng = np.random.default_rng(3)
        ang = rng.uniform(0, 2 * np.pi, 40)
        rad = rng.uniform(0.1, 0.6, 40)
        targets = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
        plan = select_parameters(b.size + len(targets), 1e-12, alpha, 4.0)
        u0, g0 = eval_homogeneous(b, sigma, targets, alpha)
        u1, g1 = eval_homogeneous(b, sigma, targets, alpha, plan=plan)
        assert np.max(np.abs(u1 - u0)) < 1e-10
        assert np.max(np.abs(g1 - g0)) < 1e-9

    def test_outside_target_raises(self):
        b = starfish_boundary(40)
        sigma = np.ones(b.size)
        inside = lambda pts: geom.classify_points(b, pts, 0.05)
        with pytest.raises(ValueError, match="inside"):
            eval_homogeneous(b, sigma, np.array([[2.0, 2.0]]), 3.0,
                             check_inside=inside)
        # interior targets pass the same check
        eval_homogeneous(b, sigma, np.array([[0.1, 0.1]]), 3.0,
                         check_inside=inside)
