"""IMEX spectral-deferred-correction time integrator on moving domains.

Advances the advection--diffusion equation

    u_t + v . grad(u) = eps * Lap(u) + F   on Omega(t),  du/dn = g on the
    boundary,

by splitting each time step [t_n, t_n + dt] over P = K Gauss-Lobatto
substeps.  A first-order IMEX Euler sweep produces a provisional solution;
K - 1 correction sweeps each raise the order by one.  The diffusion term is
implicit, so every substep reduces to a modified Helmholtz solve

    (alpha^2 - Lap) u = f,   alpha = sqrt(1 / (eps * dt_m)),

handled by the function-extension / FFT / integral-equation pipeline: the
right-hand side is extended compactly across the boundary (pux), a periodic
particular solution is computed spectrally (fourier), and a homogeneous
correction enforcing the Neumann condition is computed with a boundary
integral equation (bie, with optional fast summation via ewald).

On a moving domain the right-hand side combines fields that live on the
domain at different substep times.  Each contribution is transferred to the
target domain by evaluating it where it is known and filling the uncovered
slice (points of the newer domain not inside the older one) with the
non-compact local extension of the older field.

Problem objects supply the physics through a small duck-typed protocol:

    eps                      diffusion coefficient (float)
    boundary_at(t, base)     Boundary at time t; ``base`` is the most recent
                             available Boundary (may be ignored by analytic
                             motions; a default RK4 advance is used if the
                             attribute is absent)
    velocity(t, pts)         velocity samples, pts (M, 2) -> (M, 2)
    source(t, pts)           source term F, pts (M, 2) -> (M,)
    neumann(t, boundary)     Neumann data g at the boundary nodes -> (N,)
    initial_u(pts)           initial condition -> (M,)
    initial_gradient(pts)    optional analytic gradient of u0 -> (M, 2)
    initial_laplacian(pts)   optional analytic Laplacian of u0 -> (M,)
    rigid_key                optional hashable; set when the boundary motion
                             is rigid, enabling reuse of the integral-operator
                             matrix across times (it is invariant under rigid
                             motions of a fixed shape)
"""

import csv
import logging

import numpy as np
from dataclasses import dataclass

from . import bie, ewald, geom, pux
from .fourier import PeriodicSpectralSolver

logger = logging.getLogger(__name__)

SAFETY_FACTOR = 0.9


# --------------------------------------------------------------------- #
# Gauss-Lobatto rule
# --------------------------------------------------------------------- #

def lobatto_nodes(P):
    """Gauss-Lobatto nodes on [0, 1]: both endpoints plus the roots of the
    derivative of the Legendre polynomial of degree P - 1."""
    P = int(P)
    if P < 2 or P > 5:
        raise ValueError("node count must be in {2, 3, 4, 5}")
    if P == 2:
        interior = np.array([])
    else:
        leg = np.polynomial.legendre.Legendre.basis(P - 1)
        interior = leg.deriv().roots().real
    x = np.concatenate([[-1.0], np.sort(interior), [1.0]])
    return 0.5 * (x + 1.0)


def lobatto_rule(P):
    """Nodes t_m on [0, 1] and the substep integration weights
    q[m, j] = integral over [t_m, t_{m+1}] of the j-th Lagrange basis
    polynomial through all P nodes.  Returns (nodes, q) with q of shape
    (P - 1, P)."""
    nodes = lobatto_nodes(P)
    P = len(nodes)
    q = np.empty((P - 1, P))
    for j in range(P):
        roots = np.delete(nodes, j)
        poly = np.polynomial.Polynomial.fromroots(roots)
        poly = poly / poly(nodes[j])
        anti = poly.integ()
        q[:, j] = anti(nodes[1:]) - anti(nodes[:-1])
    return nodes, q


# --------------------------------------------------------------------- #
# per-node state
# --------------------------------------------------------------------- #

@dataclass
class Snapshot:
    """Geometry and problem data frozen at one substep time."""
    t: float
    boundary: object
    mask: np.ndarray          # flat bool, True inside the domain
    layout: object            # pux partition layout
    v: np.ndarray             # velocity at all grid points, (n^2, 2)
    g: np.ndarray             # Neumann data at boundary nodes
    F: np.ndarray             # source term at all grid points, (n^2,)


@dataclass
class NodeField:
    """Solution data at one substep node, stored on the full flat grid with
    zeros outside the domain mask."""
    u: np.ndarray
    ux: np.ndarray
    uy: np.ndarray
    lap: np.ndarray


@dataclass
class StepStats:
    implicit_solves: int = 0
    gmres_iters: int = 0
    extension_calls: int = 0


# --------------------------------------------------------------------- #
# modified Helmholtz substep solver
# --------------------------------------------------------------------- #

class ModifiedHelmholtzSolver:
    """One-stop modified Helmholtz solve on a domain snapshot.

    Combines the compact pux extension of the right-hand side, the periodic
    spectral particular solution, and the Neumann boundary correction by a
    second-kind integral equation.  Integral-operator matrices are cached
    per (rigid-motion key, alpha); Ewald summation plans per alpha.
    """

    def __init__(self, grid, op, bie_tol=1e-12, ewald_tol=1e-12,
                 ewald_threshold=2.0e7, q_blend=3):
        self.grid = grid
        self.op = op
        self.bie_tol = float(bie_tol)
        self.ewald_tol = float(ewald_tol)
        self.ewald_threshold = float(ewald_threshold)
        self.q_blend = int(q_blend)
        self.spectral = PeriodicSpectralSolver(grid.n, grid.dx,
                                               origin=grid.axis[0])
        self._nystrom_cache = {}
        self._plan_cache = {}

    def _system(self, boundary, alpha, rigid_key):
        if rigid_key is None:
            return bie.NystromSystem(boundary, alpha)
        key = (rigid_key, round(float(alpha), 10), boundary.size)
        matrix = self._nystrom_cache.get(key)
        system = bie.NystromSystem(boundary, alpha, matrix=matrix)
        if matrix is None:
            self._nystrom_cache[key] = system.matrix
        return system

    def _plan(self, boundary, alpha):
        key = round(float(alpha), 10)
        plan = self._plan_cache.get(key)
        if plan is None:
            plan = ewald.select_parameters(
                boundary.size, self.ewald_tol, alpha, self.grid.L,
                grid=self.grid)
            self._plan_cache[key] = plan
        return plan

    def solve(self, snap, f_inside, alpha, rigid_key=None):
        """Solve (alpha^2 - Lap) u = f on the snapshot's domain with Neumann
        data snap.g.  f_inside holds f at the masked grid points (flat
        order).  Returns (NodeField, gmres_iterations)."""
        grid, mask = self.grid, snap.mask
        f_flat = np.zeros(grid.n * grid.n)
        f_flat[mask] = f_inside
        f_e = pux.global_extension(self.op, snap.layout, mask, f_flat,
                                   q=self.q_blend, compact=True)
        u_p, upx, upy, uhat = self.spectral.solve_particular(
            f_e.reshape(grid.shape), alpha)

        gx_hat, gy_hat = self.spectral.gradient_coefficients(uhat)
        bx = snap.boundary.x
        dun = (self.spectral.eval_at_points(gx_hat, bx)
               * snap.boundary.normal[:, 0]
               + self.spectral.eval_at_points(gy_hat, bx)
               * snap.boundary.normal[:, 1])
        rhs = snap.g - dun

        system = self._system(snap.boundary, alpha, rigid_key)
        sigma, info = system.solve(rhs, tol=self.bie_tol)

        pts = grid.points[mask]
        plan = None
        grid_targets = False
        if pts.shape[0] * snap.boundary.size > self.ewald_threshold:
            plan = self._plan(snap.boundary, alpha)
            grid_targets = True
        uh, gh = bie.eval_homogeneous(snap.boundary, sigma, pts, alpha,
                                      want_gradient=True, plan=plan,
                                      grid_targets=grid_targets)

        n2 = grid.n * grid.n
        out = NodeField(u=np.zeros(n2), ux=np.zeros(n2), uy=np.zeros(n2),
                        lap=np.zeros(n2))
        out.u[mask] = u_p.ravel()[mask] + uh
        out.ux[mask] = upx.ravel()[mask] + gh[:, 0]
        out.uy[mask] = upy.ravel()[mask] + gh[:, 1]
        # the PDE gives the Laplacian directly, no extra differentiation
        out.lap[mask] = alpha**2 * out.u[mask] - f_inside
        return out, info["iterations"]


# --------------------------------------------------------------------- #
# SDC driver
# --------------------------------------------------------------------- #

class SdcDriver:
    """Spectral-deferred-correction stepping of a moving-domain problem."""

    def __init__(self, problem, grid, op, K, bie_tol=1e-12, ewald_tol=1e-12,
                 ewald_threshold=2.0e7, q_blend=3):
        self.problem = problem
        self.grid = grid
        self.op = op
        self.K = int(K)
        self.nodes, self.qweights = lobatto_rule(self.K)
        self.solver = ModifiedHelmholtzSolver(
            grid, op, bie_tol=bie_tol, ewald_tol=ewald_tol,
            ewald_threshold=ewald_threshold, q_blend=q_blend)
        self.rigid_key = getattr(problem, "rigid_key", None)

    # -- snapshots ---------------------------------------------------- #

    def _boundary_at(self, t, base):
        fn = getattr(self.problem, "boundary_at", None)
        if fn is not None:
            return fn(t, base)
        return geom.advance_boundary(base, self.problem.velocity, t - base.t)

    def make_snapshot(self, t, base_boundary):
        boundary = (base_boundary if base_boundary is not None
                    and abs(t - base_boundary.t) == 0.0
                    else self._boundary_at(t, base_boundary))
        mask = geom.classify_points(boundary, self.grid.points, self.grid.dx)
        layout = pux.build_layout(self.op, boundary, self.grid, mask)
        pts = self.grid.points
        return Snapshot(t=t, boundary=boundary, mask=mask, layout=layout,
                        v=self.problem.velocity(t, pts),
                        g=self.problem.neumann(t, boundary),
                        F=self.problem.source(t, pts))

    def initial_state(self, t0):
        """Initial NodeField at t0: u0 sampled on the grid; the gradient and
        Laplacian from the problem if it provides them analytically, else by
        spectral differentiation of a compact extension of u0."""
        fn = getattr(self.problem, "boundary_at", None)
        if fn is not None:
            boundary = fn(t0, None)
        else:
            boundary = self.problem.initial_boundary(t0)
        snap = self.make_snapshot(t0, boundary)
        n2 = self.grid.n * self.grid.n
        mask = snap.mask
        pts = self.grid.points[mask]
        fieldv = NodeField(u=np.zeros(n2), ux=np.zeros(n2), uy=np.zeros(n2),
                           lap=np.zeros(n2))
        fieldv.u[mask] = self.problem.initial_u(pts)

        grad_fn = getattr(self.problem, "initial_gradient", None)
        lap_fn = getattr(self.problem, "initial_laplacian", None)
        if grad_fn is not None and lap_fn is not None:
            g = grad_fn(pts)
            fieldv.ux[mask] = g[:, 0]
            fieldv.uy[mask] = g[:, 1]
            fieldv.lap[mask] = lap_fn(pts)
        else:
            u_e = pux.global_extension(self.op, snap.layout, mask, fieldv.u,
                                       compact=True)
            sp = self.solver.spectral
            uhat = np.fft.fft2(u_e.reshape(self.grid.shape))
            gx_hat, gy_hat = sp.gradient_coefficients(uhat)
            fieldv.ux[mask] = np.fft.ifft2(gx_hat).real.ravel()[mask]
            fieldv.uy[mask] = np.fft.ifft2(gy_hat).real.ravel()[mask]
            lap_hat = -sp.ksq * uhat
            fieldv.lap[mask] = np.fft.ifft2(lap_hat).real.ravel()[mask]
        return snap, fieldv

    # -- right-hand side assembly ------------------------------------- #

    def _fill_to(self, src_snap, field_flat, target_idx, stats,
                 extensions=None):
        """Values of a source-level grid field at the flat indices
        target_idx of the target domain; points outside the source domain
        (the slice) are filled with the non-compact local extension."""
        known = src_snap.mask[target_idx]
        out = np.empty(len(target_idx))
        out[known] = field_flat[target_idx[known]]
        missing = target_idx[~known]
        if missing.size:
            if extensions is None:
                extensions = pux.LocalExtensions(self.op, src_snap.layout,
                                                 field_flat)
            out[~known] = pux.fill_slice(self.op, src_snap.layout,
                                         src_snap.mask, field_flat, missing,
                                         extensions=extensions)
            stats.extension_calls += 1
        return out, extensions

    def _level_integrand(self, snap, fieldv):
        """The full right-hand-side field -v . grad(u) + F + eps * Lap(u)
        frozen at one node of the previous sweep (flat grid array, valid on
        the node's mask)."""
        adv = snap.v[:, 0] * fieldv.ux + snap.v[:, 1] * fieldv.uy
        return -adv + snap.F + self.problem.eps * fieldv.lap

    def assemble_moving_rhs(self, snaps, prev_fields, cur_field_m, m,
                            dt_total, dt_sub, stats, level_cache=None,
                            provisional=False):
        """Right-hand side f on the target domain (node m+1) for the
        modified Helmholtz substep solve from node m to m+1.

        snaps: Snapshot per node; prev_fields: previous-sweep NodeField per
        node (ignored in provisional mode); cur_field_m: current-sweep field
        at node m; dt_sub: physical substep length.  Each contribution is a
        field on its own node's domain, transferred to the target domain by
        slice filling.  level_cache maps node index -> (integrand,
        LocalExtensions) reusable across the substeps of one sweep.
        """
        eps = self.problem.eps
        target = snaps[m + 1]
        target_idx = np.flatnonzero(target.mask)
        snap_m = snaps[m]

        if provisional:
            # IMEX Euler: f = u_m / (eps dt) + (-v_m . grad u_m + F_m) / eps,
            # all frozen at node m.
            adv = (snap_m.v[:, 0] * cur_field_m.ux
                   + snap_m.v[:, 1] * cur_field_m.uy)
            h = cur_field_m.u / (eps * dt_sub) + (-adv + snap_m.F) / eps
            return self._fill_to(snap_m, h, target_idx, stats)[0]

        P = len(snaps)
        f = np.zeros(len(target_idx))

        # quadrature of the previous-sweep right-hand side over the substep:
        # sum_j q_m^j * (-v_j . grad u_j + F_j + eps Lap u_j) / (eps dt_sub),
        # with the unit-interval weights scaled by the full step length
        for j in range(P):
            coeff = dt_total * self.qweights[m, j] / (eps * dt_sub)
            if level_cache is not None and j in level_cache:
                integrand, exts = level_cache[j]
            else:
                integrand = self._level_integrand(snaps[j], prev_fields[j])
                exts = None
            if j == m + 1:
                f += coeff * integrand[target_idx]
            else:
                vals, exts = self._fill_to(snaps[j], integrand, target_idx,
                                           stats, extensions=exts)
                f += coeff * vals
            if level_cache is not None:
                level_cache[j] = (integrand, exts)

        # sweep-difference terms at node m: the new-sweep value and the
        # explicit advection difference between sweeps
        adv_new = (snap_m.v[:, 0] * cur_field_m.ux
                   + snap_m.v[:, 1] * cur_field_m.uy)
        adv_old = (snap_m.v[:, 0] * prev_fields[m].ux
                   + snap_m.v[:, 1] * prev_fields[m].uy)
        h_m = (cur_field_m.u / dt_sub - adv_new + adv_old) / eps
        f += self._fill_to(snap_m, h_m, target_idx, stats)[0]

        # implicit lag at the target node, already on the target domain
        f -= prev_fields[m + 1].lap[target_idx]
        return f

    # -- substeps and steps ------------------------------------------- #

    def substep_solve(self, snaps, prev_fields, cur_field_m, m, k, dt_total,
                      dt_sub, stats, level_cache=None):
        """Advance the current sweep from node m to node m+1; k is the sweep
        index (0 = provisional).  Returns the NodeField at node m+1."""
        eps = self.problem.eps
        alpha = np.sqrt(1.0 / (eps * dt_sub))
        provisional = (k == 0)
        try:
            f = self.assemble_moving_rhs(snaps, prev_fields, cur_field_m, m,
                                         dt_total, dt_sub, stats,
                                         level_cache,
                                         provisional=provisional)
            fieldv, iters = self.solver.solve(snaps[m + 1], f, alpha,
                                              rigid_key=self.rigid_key)
        except Exception as exc:
            raise RuntimeError(
                f"substep solve failed at node m={m}, sweep k={k}: {exc}"
            ) from exc
        stats.implicit_solves += 1
        stats.gmres_iters += iters
        return fieldv

    def sdc_step(self, snap0, field0, dt):
        """One full SDC step of length dt from snap0.t.

        Returns (snap_end, field_end, r, stats, snaps) where r is the
        root-mean-square difference between the last two sweeps at the final
        node."""
        K = self.K
        t0 = snap0.t
        times = t0 + dt * self.nodes
        stats = StepStats()

        snaps = [snap0]
        for m in range(1, K):
            snaps.append(self.make_snapshot(times[m], snaps[-1].boundary))

        # provisional IMEX Euler sweep
        fields = [field0]
        for m in range(K - 1):
            dt_sub = times[m + 1] - times[m]
            fields.append(self.substep_solve(snaps, None, fields[m], m, 0,
                                             dt, dt_sub, stats))

        # correction sweeps
        r = np.inf
        for k in range(1, K):
            prev = fields
            fields = [field0]
            level_cache = {}
            for m in range(K - 1):
                dt_sub = times[m + 1] - times[m]
                fields.append(self.substep_solve(snaps, prev, fields[m], m,
                                                 k, dt, dt_sub, stats,
                                                 level_cache))
            mask_end = snaps[-1].mask
            diff = fields[-1].u[mask_end] - prev[-1].u[mask_end]
            r = float(np.sqrt(np.mean(diff**2)))

        return snaps[-1], fields[-1], r, stats, snaps


# --------------------------------------------------------------------- #
# step control
# --------------------------------------------------------------------- #

def adapt_step(dt_old, r, eps_tol, K):
    """Step-size update dt_new = dt_old * (0.9 eps_tol / r)^(1/(K+1)) and
    acceptance flag r <= eps_tol.  The step size is updated whether or not
    the step is accepted."""
    if r <= 0.0:
        raise ValueError("error estimate must be positive")
    dt_new = dt_old * (SAFETY_FACTOR * eps_tol / r) ** (1.0 / (K + 1))
    return dt_new, r <= eps_tol


def cfl_indicator(velocity, boundary, dt, dx, interior_points=None):
    """max ||v|| * dt / dx over the boundary nodes (and optional interior
    sample points) at the boundary's current time."""
    pts = boundary.x
    if interior_points is not None and len(interior_points):
        pts = np.vstack([pts, np.atleast_2d(interior_points)])
    v = velocity(boundary.t, pts)
    vmax = float(np.max(np.hypot(v[:, 0], v[:, 1]))) if len(pts) else 0.0
    return vmax * dt / dx


# --------------------------------------------------------------------- #
# time-stepping drivers
# --------------------------------------------------------------------- #

class StepLogger:
    """Accumulates one row per attempted step and writes the step log CSV
    with columns (t, dt, r, accepted, implicit_solves, gmres_iters, cfl)."""

    COLUMNS = ["t", "dt", "r", "accepted", "implicit_solves", "gmres_iters",
               "cfl"]

    def __init__(self):
        self.rows = []

    def add(self, t, dt, r, accepted, stats, cfl):
        self.rows.append({"t": t, "dt": dt, "r": r,
                          "accepted": int(bool(accepted)),
                          "implicit_solves": stats.implicit_solves,
                          "gmres_iters": stats.gmres_iters, "cfl": cfl})

    def write(self, path_or_file):
        close = False
        fh = path_or_file
        if not hasattr(fh, "write"):
            fh = open(fh, "w", newline="")
            close = True
        try:
            w = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            w.writeheader()
            for row in self.rows:
                w.writerow({c: repr(row[c]) if isinstance(row[c], float)
                            else row[c] for c in self.COLUMNS})
        finally:
            if close:
                fh.close()


def run_fixed(driver, t0, t_end, dt, log=None, snapshot_hook=None):
    """Integrate with a fixed step size from t0 to t_end (the last step is
    shortened to land on t_end exactly).  Returns (snap, field, log)."""
    if log is None:
        log = StepLogger()
    snap, fieldv = driver.initial_state(t0)
    if snapshot_hook is not None:
        snapshot_hook(snap, fieldv)
    t = t0
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        step = min(dt, t_end - t)
        cfl = cfl_indicator(driver.problem.velocity, snap.boundary, step,
                            driver.grid.dx,
                            interior_points=driver.grid.points[snap.mask])
        snap, fieldv, r, stats, _ = driver.sdc_step(snap, fieldv, step)
        t = snap.t
        log.add(t, step, r, True, stats, cfl)
        if snapshot_hook is not None:
            snapshot_hook(snap, fieldv)
    return snap, fieldv, log


def run_adaptive(driver, t0, t_end, eps_tol, dt0=None, log=None,
                 max_steps=100000, snapshot_hook=None):
    """Integrate with the adaptive step controller.  Rejected steps are
    retried from the same time with the reduced step size (all geometry and
    slice data rebuilt from scratch).  Returns (snap, field, log)."""
    if log is None:
        log = StepLogger()
    snap, fieldv = driver.initial_state(t0)
    if snapshot_hook is not None:
        snapshot_hook(snap, fieldv)
    dt = dt0 if dt0 is not None else (t_end - t0) / 100.0
    t = t0
    attempts = 0
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        if attempts >= max_steps:
            raise RuntimeError("adaptive stepping exceeded max_steps")
        attempts += 1
        step = min(dt, t_end - t)
        cfl = cfl_indicator(driver.problem.velocity, snap.boundary, step,
                            driver.grid.dx,
                            interior_points=driver.grid.points[snap.mask])
        new_snap, new_field, r, stats, _ = driver.sdc_step(snap, fieldv,
                                                           step)
        dt, accepted = adapt_step(step, r, eps_tol, driver.K)
        log.add(snap.t + step, step, r, accepted, stats, cfl)
        if accepted:
            snap, fieldv = new_snap, new_field
            t = snap.t
            if snapshot_hook is not None:
                snapshot_hook(snap, fieldv)
    return snap, fieldv, log
