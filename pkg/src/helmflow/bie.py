"""Nystrom solution of the Neumann boundary integral equation for the
homogeneous modified Helmholtz problem, with kernel-split product
integration for singular and nearly singular quadrature.

The homogeneous solution is sought as a single-layer potential

    u_h(x)      = (1/2pi) int_dOmega K_0(alpha|y-x|) sigma(y) ds_y,
    grad u_h(x) = (1/2pi) int_dOmega alpha K_1(alpha|y-x|) (y-x)/|y-x| sigma ds_y,

whose density solves the second-kind equation

    (1/2) sigma(x) + (1/2pi) int_dOmega D(y,x) sigma(y) ds_y = rhs(x),

with D(y,x) = alpha K_1(alpha|y-x|) (y-x).n(x) / |y-x| and diagonal limit
-kappa(x)/2.  Singular and nearly singular panel integrals are corrected by
product integration on the kernel splits

    K_0(z) = -I_0(z) log z + smooth,
    K_1(z) = 1/z + I_1(z) log z + smooth,

using analytic moments of y^k log(y-x) and y^k/(y-x) on [-1,1] applied to a
Legendre fit of the smooth factor.  Panels whose scaled length alpha*l
exceeds a threshold are recursively bisected first (interpolation only, no
new unknowns), since I_0/I_1 grow exponentially and defeat a degree-15 fit
on long panels.  The log and smooth split terms then grow with opposite
signs; their worst-node magnitudes can be logged to monitor cancellation.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.integrate import quad
from scipy.sparse.linalg import LinearOperator, gmres
from scipy.special import i0, i1, k0, k1

__all__ = [
    "log_moments",
    "cauchy_moments",
    "NystromSystem",
    "apply_double_layer",
    "solve_bie",
    "eval_homogeneous",
    "bisect_for_alpha",
    "Panel",
    "panels_from_boundary",
]

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
TAU_ALPHA = 4.0          # bisect panels until alpha * arclength <= TAU_ALPHA
NEAR_FACTOR = 1.2        # target is near a panel within this many arclengths
MOMENT_CUTOFF = 4.0      # |t0| beyond which moment corrections are negligible
N_Q = 16                 # Gauss-Legendre nodes per panel


# --------------------------------------------------------------------- #
# analytic moments on the canonical panel [-1, 1]
# --------------------------------------------------------------------- #
def cauchy_moments(x, n):
    """q_k = int_{-1}^{1} y^k / (y - x) dy, k = 0..n-1 (complex, principal
    branch).  Forward recursion for |x| <= 1.3; backward recursion (stable
    against the x^k growth of forward errors) otherwise; direct quadrature
    for very large |x|."""
    x = complex(x)
    ax = abs(x)
    if ax > 50.0:
        out = np.empty(n, dtype=complex)
        for k in range(n):
            re = quad(lambda y: (y**k * (y - x.real)) / abs(y - x) ** 2, -1, 1)[0]
            im = quad(lambda y: (y**k * x.imag) / abs(y - x) ** 2, -1, 1)[0]
            out[k] = re + 1j * im
        return out
    if ax <= 1.3:
        out = [complex(np.log((1.0 - x) / (-1.0 - x)))]
        for k in range(1, n):
            out.append(x * out[-1] + (2.0 / k if k % 2 else 0.0))
        return np.array(out, dtype=complex)
    # backward recursion: the error of the zero start value decays by
    # 1/|x| per step, so pad until it is below machine precision
    pad = int(40.0 / np.log10(ax)) + 10 if ax < 10 else 40
    m = n + pad
    out = [0j] * m
    cur = 0j
    invx = 1.0 / x
    for k in range(m - 1, 0, -1):
        cur = (cur - (2.0 / k if k % 2 else 0.0)) * invx
        out[k - 1] = cur
    return np.array(out[:n], dtype=complex)


def _cauchy_moments_many(x, n):
    """cauchy_moments vectorized over an array of targets x (all with
    |x| <= 50; the quadrature branch is not needed for panel-local
    coordinates)."""
    x = np.asarray(x, dtype=complex)
    out = np.empty((len(x), n), dtype=complex)
    ax = np.abs(x)
    small = ax <= 1.3
    if small.any():
        xs = x[small]
        q = np.empty((len(xs), n), dtype=complex)
        q[:, 0] = np.log((1.0 - xs) / (-1.0 - xs))
        for k in range(1, n):
            q[:, k] = xs * q[:, k - 1] + (2.0 / k if k % 2 else 0.0)
        out[small] = q
    big = ~small
    if big.any():
        xb = x[big]
        pad = int(40.0 / np.log10(min(np.abs(xb).min(), 10.0))) + 10
        m = n + pad
        invx = 1.0 / xb
        cur = np.zeros(len(xb), dtype=complex)
        q = np.empty((len(xb), n), dtype=complex)
        for k in range(m - 1, 0, -1):
            cur = (cur - (2.0 / k if k % 2 else 0.0)) * invx
            if k - 1 < n:
                q[:, k - 1] = cur
        out[big] = q
    return out


def _log_moments_from_cauchy_many(x, q, n):
    """Batched log moments from batched Cauchy moments (rows of q)."""
    k = np.arange(n)
    upper = np.log(1.0 - x)
    lower = np.log(-1.0 - x)
    vals = (upper[:, None] - (-1.0) ** (k + 1) * lower[:, None]
            - q[:, 1 : n + 1]) / (k + 1)
    return vals.real


def _log_moments_from_cauchy(x, q, n):
    """Log moments given the first n+1 Cauchy moments of the same x."""
    k = np.arange(n)
    upper = np.log(1.0 - x) if x != 1.0 else 0.0
    lower = np.log(-1.0 - x) if x != -1.0 else 0.0
    vals = (upper - (-1.0) ** (k + 1) * lower - q[1 : n + 1]) / (k + 1)
    return vals.real


def log_moments(x, n):
    """mu_k = int_{-1}^{1} y^k log|y - x| dy, k = 0..n-1 (real).

    Computed from the complex antiderivative; branch ambiguities are purely
    imaginary and drop on taking the real part."""
    x = complex(x)
    return _log_moments_from_cauchy(x, cauchy_moments(x, n + 1), n)


# --------------------------------------------------------------------- #
# panels
# --------------------------------------------------------------------- #
_GL_NODES, _GL_WEIGHTS = npleg.leggauss(N_Q)
_VINV = np.linalg.inv(npleg.legvander(_GL_NODES, N_Q - 1))
# map nodal values to the monomial coefficients of the degree-15
# interpolant (a Legendre fit first for stability, then converted so the
# analytic monomial moments apply)
_NODES_TO_MONO = np.vstack(
    [npleg.leg2poly(np.ascontiguousarray(_VINV[:, j])) for j in range(N_Q)]
).T
# interpolation from parent nodes to the nodes of each half panel
_INTERP_LEFT = npleg.legvander(0.5 * (_GL_NODES - 1.0), N_Q - 1) @ _VINV
_INTERP_RIGHT = npleg.legvander(0.5 * (_GL_NODES + 1.0), N_Q - 1) @ _VINV


@dataclass
class Panel:
    """One quadrature panel: complex node positions z and parameter
    derivatives zp at the 16 Gauss-Legendre nodes of the canonical
    parameter t in [-1, 1]."""

    z: np.ndarray
    zp: np.ndarray

    @property
    def speed(self):
        return np.abs(self.zp)

    @property
    def arclength(self):
        return float(np.sum(self.speed * _GL_WEIGHTS))

    @property
    def midpoint(self):
        return npleg.legval(0.0, _VINV @ self.z)

    def children(self):
        left = Panel(_INTERP_LEFT @ self.z, 0.5 * (_INTERP_LEFT @ self.zp))
        right = Panel(_INTERP_RIGHT @ self.z, 0.5 * (_INTERP_RIGHT @ self.zp))
        return left, right

    def position(self, t):
        return npleg.legval(t, _VINV @ self.z)

    def preimage(self, z0):
        """Newton iteration for the (possibly complex) parameter t0 with
        z(t0) = z0, on the Legendre expansion of z."""
        return complex(self.preimages(np.array([z0]))[0])

    def preimages(self, z0s):
        """Vectorized Newton iteration for the (possibly complex) panel
        parameters with z(t) = z0 for each target in z0s."""
        c = _VINV @ self.z
        cp = npleg.legder(c)
        z0s = np.asarray(z0s, dtype=complex)
        start = np.argmin(np.abs(self.z[None, :] - z0s[:, None]), axis=1)
        t = _GL_NODES[start].astype(complex)
        active = np.ones(len(z0s), dtype=bool)
        for _ in range(50):
            dt = (npleg.legval(t, c) - z0s) / npleg.legval(t, cp)
            t = np.where(active, t - dt, t)
            active &= (np.abs(dt) >= 1e-14) & (np.abs(t) <= 10.0)
            if not active.any():
                break
        return t


def panels_from_boundary(boundary):
    """Split a panelized boundary (16 Gauss-Legendre nodes per panel) into
    Panel objects carrying canonical-parameter derivatives."""
    if boundary.n_nodes != N_Q:
        raise ValueError(f"boundary must carry {N_Q} nodes per panel")
    panels = []
    z, zp = boundary.z, boundary.zp
    for i in range(boundary.n_panels):
        sl = slice(N_Q * i, N_Q * (i + 1))
        half = 0.5 * (boundary.panel_breaks[i + 1] - boundary.panel_breaks[i])
        panels.append(Panel(z[sl].astype(complex), (zp[sl] * half).astype(complex)))
    return panels


def bisect_for_alpha(panel, density, alpha, tau=TAU_ALPHA, _depth=0):
    """Recursively bisect a panel until alpha * arclength <= tau,
    interpolating the density to the children through the parent's
    Legendre expansion.  Returns a list of (Panel, density-values)."""
    if _depth > 30:
        raise RuntimeError("panel bisection exceeded depth 30")
    if alpha * panel.arclength <= tau:
        return [(panel, density)]
    left, right = panel.children()
    out = bisect_for_alpha(left, _INTERP_LEFT @ density, alpha, tau, _depth + 1)
    out += bisect_for_alpha(right, _INTERP_RIGHT @ density, alpha, tau, _depth + 1)
    return out


def _bisect_operators(panel, alpha, tau=TAU_ALPHA, _op=None, _a=-1.0, _b=1.0,
                      _depth=0):
    """Like bisect_for_alpha but yields (Panel, interpolation operator from
    parent nodes, parent-parameter interval [a, b]) for row assembly."""
    if _op is None:
        _op = np.eye(N_Q)
    if _depth > 30:
        raise RuntimeError("panel bisection exceeded depth 30")
    if alpha * panel.arclength <= tau:
        return [(panel, _op, _a, _b)]
    left, right = panel.children()
    mid = 0.5 * (_a + _b)
    return (
        _bisect_operators(left, alpha, tau, _INTERP_LEFT @ _op, _a, mid,
                          _depth + 1)
        + _bisect_operators(right, alpha, tau, _INTERP_RIGHT @ _op, mid, _b,
                            _depth + 1)
    )


# --------------------------------------------------------------------- #
# product-integration rows on a single (short) panel
# --------------------------------------------------------------------- #
def _log_pi_row(panel, t0, z0, factor, record=None):
    """Row r with r . sigma ~= int F(t) log|z(t) - z0| dt for
    F(t) = factor(t) sigma(t) |z'(t)| given by node values of `factor`
    (real or complex), where t0 is the preimage of the target z0 (which
    may lie outside the panel).  Exact for F of polynomial degree <= 15.

    Splits log|z - z0| = log|t - t0| + log|phi| with the smooth factor
    phi = (z - z0)/(t - t0); the first term uses the analytic moments,
    the second plain Gauss-Legendre."""
    dt = _GL_NODES - t0
    dz = panel.z - z0
    coincident = np.abs(dt) < 1e-12
    phi = np.where(coincident, panel.zp, dz / np.where(coincident, 1.0, dt))
    smooth = _GL_WEIGHTS * np.log(np.abs(phi))
    singular = log_moments(t0, N_Q) @ _NODES_TO_MONO
    if record is not None:
        fs = np.abs(factor * panel.speed)
        j = int(np.argmax(fs))
        record["log_term"] = float(fs[j] * np.abs(singular[j]))
        record["smooth_term"] = float(fs[j] * np.abs(smooth[j]))
    return (smooth + singular) * factor * panel.speed


def _cauchy_pi_row(panel, t0, z0):
    """Row r with conj(r . g) = int g(t) (z - z0)/|z - z0|^2 dt for real
    nodal data g; the complex result encodes the 2-vector."""
    h_factor = (_GL_NODES - t0) / (panel.z - z0)
    return (cauchy_moments(t0, N_Q) @ _NODES_TO_MONO) * h_factor


def _plain_value_row(panel, z0, alpha):
    r = np.abs(panel.z - z0)
    return k0(alpha * r) * panel.speed * _GL_WEIGHTS


def _plain_gradient_row(panel, z0, alpha):
    dz = panel.z - z0
    r = np.abs(dz)
    return alpha * k1(alpha * r) * (dz / r) * panel.speed * _GL_WEIGHTS


def _child_t0(t0, a, b):
    return (2.0 * t0 - a - b) / (b - a)


def _accurate_value_row(panel, z0, alpha, t0, ops=None):
    """Product-integrated row for int K_0(alpha|z - z0|) sigma |z'| dt,
    with t0 the (complex) preimage of z0 in parent coordinates."""
    rows = np.zeros(N_Q)
    for child, op, a, b in (ops if ops is not None
                            else _bisect_operators(panel, alpha)):
        tc = _child_t0(t0, a, b)
        if abs(tc) > MOMENT_CUTOFF:
            rows += _plain_value_row(child, z0, alpha) @ op
            continue
        r = np.maximum(np.abs(child.z - z0), 1e-15)
        # smooth remainder K_0 + I_0 log r, integrated plainly
        smooth = (k0(alpha * r) + i0(alpha * r) * np.log(r)) \
            * child.speed * _GL_WEIGHTS
        rows += (smooth + _log_pi_row(child, tc, z0, -i0(alpha * r))) @ op
    return rows


def _accurate_gradient_row(panel, z0, alpha, t0, ops=None):
    """Product-integrated row for the gradient kernel
    alpha K_1(alpha|z - z0|) (z - z0)/|z - z0| (complex row = 2-vector)."""
    rows = np.zeros(N_Q, dtype=complex)
    for child, op, a, b in (ops if ops is not None
                            else _bisect_operators(panel, alpha)):
        tc = _child_t0(t0, a, b)
        if abs(tc) > MOMENT_CUTOFF:
            rows += _plain_gradient_row(child, z0, alpha) @ op
            continue
        dz = child.z - z0
        r = np.maximum(np.abs(dz), 1e-15)
        e = dz / r
        # smooth remainder: full kernel minus its Cauchy and log parts
        smooth = (alpha * k1(alpha * r) * e - dz / r**2
                  - alpha * i1(alpha * r) * e * np.log(r)) \
            * child.speed * _GL_WEIGHTS
        logpart = _log_pi_row(child, tc, z0, alpha * i1(alpha * r) * e)
        cauchy = np.conj(_cauchy_pi_row(child, tc, z0) * child.speed)
        rows += (smooth + logpart + cauchy) @ op
    return rows


def _near_correction_block(panel, ops, z0s, alpha, t0s, want_gradient):
    """Correction rows (product-integrated minus plain) for the value and
    gradient kernels, for a block of off-surface targets near one panel.

    Vectorized over targets, sharing the bisection structure, Bessel
    evaluations and analytic moments between the two kernels.  Returns
    (V, G) with V of shape (T, 16) real and G of shape (T, 16) complex
    (or None without gradient)."""
    T = len(z0s)
    V = np.zeros((T, N_Q))
    G = np.zeros((T, N_Q), dtype=complex) if want_gradient else None
    for child, op, a, b in ops:
        tc = (2.0 * t0s - a - b) / (b - a)
        dz = child.z[None, :] - z0s[:, None]
        r = np.maximum(np.abs(dz), 1e-15)
        ar = alpha * r
        sw = child.speed * _GL_WEIGHTS
        acc_v = k0(ar) * sw[None, :]
        if want_gradient:
            e = dz / r
            acc_g = alpha * k1(ar) * e * sw[None, :]
        near = np.abs(tc) <= MOMENT_CUTOFF
        if near.any():
            tcn = tc[near]
            qm = _cauchy_moments_many(tcn, N_Q + 1)
            sing = _log_moments_from_cauchy_many(tcn, qm, N_Q) @ _NODES_TO_MONO
            dt = _GL_NODES[None, :] - tcn[:, None]
            coincident = np.abs(dt) < 1e-12
            dzn = dz[near]
            rn = r[near]
            arn = ar[near]
            phi = np.where(coincident, child.zp[None, :],
                           dzn / np.where(coincident, 1.0, dt))
            # nodal weights of the product-integrated log factor
            logw = (_GL_WEIGHTS[None, :] * np.log(np.abs(phi)) + sing) \
                * child.speed[None, :]
            logr = np.log(rn)
            i0v = i0(arn)
            acc_v[near] = (k0(arn) + i0v * logr) * sw[None, :] - i0v * logw
            if want_gradient:
                i1v = i1(arn)
                en = e[near]
                smooth = (alpha * k1(arn) * en - dzn / rn**2
                          - alpha * i1v * en * logr) * sw[None, :]
                cauchy = np.conj((qm[:, :N_Q] @ _NODES_TO_MONO) * dt / dzn
                                 * child.speed[None, :])
                acc_g[near] = smooth + alpha * i1v * en * logw + cauchy
        V += acc_v @ op
        if want_gradient:
            G += acc_g @ op
    # subtract the plain single-panel quadrature the far-field sum applied
    dz = panel.z[None, :] - z0s[:, None]
    r = np.abs(dz)
    sw = panel.speed * _GL_WEIGHTS
    V -= k0(alpha * r) * sw[None, :]
    if want_gradient:
        G -= alpha * k1(alpha * r) * (dz / r) * sw[None, :]
    return V, G


def _accurate_double_layer_row(panel, z0, normal, alpha, t0, kappa0,
                               record=None, ops=None):
    """Product-integrated row for int D(y, x) sigma ds over a boundary
    panel, for an on-surface target x = z0 with unit outward normal
    (complex) and curvature kappa0.  On-surface only the log split is
    singular; the Cauchy-type part (y - x).n(x)/|y - x|^2 is bounded along
    the curve and stays with the smooth remainder, whose value at the
    coincident node is the diagonal limit -kappa0/2 (the log factor
    vanishes there)."""
    nvec = complex(normal)
    rows = np.zeros(N_Q)
    for child, op, a, b in (ops if ops is not None
                            else _bisect_operators(panel, alpha)):
        tc = _child_t0(t0, a, b)
        dz = child.z - z0
        r = np.abs(dz)
        hit = r < 1e-9 * child.arclength
        safe = np.where(hit, 1.0, r)
        edotn = (dz.real * nvec.real + dz.imag * nvec.imag) / safe
        if abs(tc) > MOMENT_CUTOFF:
            dl = np.where(hit, -0.5 * kappa0, alpha * k1(alpha * safe) * edotn)
            rows += (dl * child.speed * _GL_WEIGHTS) @ op
            continue
        dlog = np.where(hit, 0.0, alpha * i1(alpha * safe) * edotn)
        smooth_val = alpha * k1(alpha * safe) * edotn - dlog * np.log(safe)
        smooth_val = np.where(hit, -0.5 * kappa0, smooth_val)
        rows += (smooth_val * child.speed * _GL_WEIGHTS
                 + _log_pi_row(child, tc.real, z0, dlog, record=record)) @ op
    return rows


# --------------------------------------------------------------------- #
# Nystrom system
# --------------------------------------------------------------------- #
class NystromSystem:
    """Dense Nystrom discretization of the boundary integral equation with
    product-integration corrections for near panels and alpha-driven
    bisection.  The assembled matrix can be reused across solves (the
    operator depends only on the boundary shape and alpha, so rigid
    motions of a cached shape need no reassembly)."""

    def __init__(self, boundary, alpha, log_split_terms=False, matrix=None):
        self.boundary = boundary
        self.alpha = float(alpha)
        self.panels = panels_from_boundary(boundary)
        self.n = boundary.size
        self.split_records = [] if log_split_terms else None
        # a precomputed matrix may be supplied: the operator is invariant
        # under rigid motions of the boundary, so a cached matrix for the
        # same shape and alpha can be reused
        self.matrix = self._assemble() if matrix is None else matrix

    def _wrapped_t0(self, tau, a, b):
        """Local coordinate of boundary parameter tau on panel [a, b],
        taking the 2 pi periodic representative of smallest magnitude."""
        period = self.boundary.panel_breaks[-1] - self.boundary.panel_breaks[0]
        cands = (2.0 * (tau + np.array([-period, 0.0, period])) - a - b) / (b - a)
        return float(cands[np.argmin(np.abs(cands))])

    def _assemble(self):
        b = self.boundary
        alpha = self.alpha
        z = b.z
        nrm = b.normal[:, 0] + 1j * b.normal[:, 1]
        dz = z[None, :] - z[:, None]  # y_n - x_m at entry (m, n)
        r = np.abs(dz)
        np.fill_diagonal(r, 1.0)
        edotn = (dz.real * nrm.real[:, None] + dz.imag * nrm.imag[:, None]) / r
        K = alpha * k1(alpha * r) * edotn
        np.fill_diagonal(K, -0.5 * b.kappa)
        sw = b.speed * b.w
        A = 0.5 * np.eye(self.n) + K * sw[None, :] / TWO_PI

        mids = np.array([p.midpoint for p in self.panels])
        lens = np.array([p.arclength for p in self.panels])
        breaks = b.panel_breaks
        ops_cache = {}
        for m in range(self.n):
            z0 = z[m]
            for ip in np.nonzero(np.abs(mids - z0) < NEAR_FACTOR * lens)[0]:
                t0 = self._wrapped_t0(b.param[m], breaks[ip], breaks[ip + 1])
                cols = slice(N_Q * ip, N_Q * (ip + 1))
                plain = K[m, cols] * sw[cols]
                rec = {} if self.split_records is not None else None
                if ip not in ops_cache:
                    ops_cache[ip] = _bisect_operators(self.panels[ip], alpha)
                acc = _accurate_double_layer_row(
                    self.panels[ip], z0, nrm[m], alpha, t0, b.kappa[m],
                    record=rec, ops=ops_cache[ip])
                if rec:
                    rec.update(node=m, panel=int(ip))
                    self.split_records.append(rec)
                A[m, cols] += (acc - plain) / TWO_PI
        if self.split_records:
            worst = max(self.split_records, key=lambda r: r["log_term"])
            logger.info(
                "kernel-split magnitudes at worst node %d: log term %.3e, "
                "smooth term %.3e", worst["node"], worst["log_term"],
                worst["smooth_term"])
        return A

    def apply(self, density):
        return self.matrix @ np.asarray(density, float)

    def solve(self, rhs, tol=1e-12, maxiter=500):
        """Unrestarted GMRES solve; returns (density, info dict) with the
        iteration count and final relative residual."""
        rhs = np.asarray(rhs, float)
        if not np.all(np.isfinite(rhs)):
            raise ValueError("right-hand side must be finite")
        if np.all(rhs == 0.0):
            return np.zeros_like(rhs), {"iterations": 0, "residual": 0.0}
        iters = {"n": 0}

        def cb(_):
            iters["n"] += 1

        op = LinearOperator((self.n, self.n), matvec=self.apply)
        sol, info = gmres(op, rhs, rtol=tol, atol=0.0,
                          restart=min(self.n, maxiter), maxiter=maxiter,
                          callback=cb, callback_type="legacy")
        res = np.linalg.norm(self.apply(sol) - rhs) / np.linalg.norm(rhs)
        if info != 0 and res > 10 * tol:
            raise RuntimeError(f"GMRES did not converge: residual {res:.3e}")
        return sol, {"iterations": iters["n"], "residual": float(res)}


def apply_double_layer(boundary, density, alpha, system=None):
    """(1/2) sigma + (1/2pi) int D sigma ds at all boundary nodes."""
    if system is None:
        system = NystromSystem(boundary, alpha)
    return system.apply(density)


def solve_bie(boundary, rhs, alpha, tol=1e-12, system=None):
    """Solve the boundary integral equation for the layer density."""
    if system is None:
        system = NystromSystem(boundary, alpha)
    return system.solve(rhs, tol=tol)


# --------------------------------------------------------------------- #
# potential evaluation
# --------------------------------------------------------------------- #
def eval_homogeneous(boundary, density, targets, alpha, want_gradient=True,
                     plan=None, grid_targets=False, check_inside=None):
    """Single-layer potential (and gradient) at interior targets.

    The far field is plain quadrature, summed directly or, when an Ewald
    plan is supplied, by spectral Ewald summation.  Targets within
    NEAR_FACTOR panel arclengths of a panel midpoint get the plain
    contribution of that panel replaced by product integration.  If
    `check_inside` (a boolean predicate on (M, 2) points) is given,
    targets outside the domain raise ValueError.
    """
    from .ewald import SourceSet, direct_sum, ewald_sum

    targets = np.atleast_2d(np.asarray(targets, float))
    density = np.asarray(density, float)
    if check_inside is not None and not np.all(check_inside(targets)):
        raise ValueError("targets must lie strictly inside the domain")
    weights = density * boundary.speed * boundary.w
    src = SourceSet(boundary.x, weights)
    if plan is not None:
        base = ewald_sum(src, targets, alpha, plan,
                         want_gradient=want_gradient,
                         grid_targets=grid_targets)
    else:
        base = direct_sum(src, targets, alpha, want_gradient=want_gradient)
    if want_gradient:
        u, grad = base
        gz = grad[:, 0] + 1j * grad[:, 1]
    else:
        u, gz = base, None

    panels = panels_from_boundary(boundary)
    zt = targets[:, 0] + 1j * targets[:, 1]
    for ip, panel in enumerate(panels):
        near = np.nonzero(
            np.abs(zt - panel.midpoint) < NEAR_FACTOR * panel.arclength)[0]
        if near.size == 0:
            continue
        sigma = density[N_Q * ip : N_Q * (ip + 1)]
        ops = _bisect_operators(panel, alpha)
        t0s = panel.preimages(zt[near])
        V, G = _near_correction_block(panel, ops, zt[near], alpha, t0s,
                                      want_gradient)
        u[near] += V @ sigma / TWO_PI
        if want_gradient:
            gz[near] += G @ sigma / TWO_PI
    if want_gradient:
        return u, np.column_stack([gz.real, gz.imag])
    return u
