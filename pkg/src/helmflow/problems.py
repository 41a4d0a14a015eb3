"""Analytic velocity fields and moving-domain advection-diffusion problems.

Each problem class implements the duck-typed protocol consumed by
sdc.SdcDriver: eps, velocity(t, pts), source(t, pts), neumann(t, boundary),
initial_u(pts), and either boundary_at(t, base) for analytically known
motions or initial_boundary(t0) for boundaries advected with the flow.
"""

import numpy as np

from . import geom

__all__ = [
    "VelocityField",
    "RotatedCurve",
    "RotatingSolutionProblem",
    "DiffusingDropProblem",
    "DeformingDropProblem",
    "RobustDropProblem",
    "disk_neumann_heat_reference",
]


# --------------------------------------------------------------------- #
# velocity fields
# --------------------------------------------------------------------- #

class VelocityField:
    """An analytic velocity field v(t, x) of one of the supported kinds:
    zero, translation(v), rotation(w), extensional, or a superposition of
    other fields.  Instances are callables mapping (t, points) -> (M, 2)."""

    def __init__(self, kind, **params):
        if kind not in ("zero", "translation", "rotation", "extensional",
                        "superposition"):
            raise ValueError(f"unknown velocity field kind: {kind!r}")
        self.kind = kind
        self.params = params

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def translation(cls, vx, vy=0.0):
        return cls("translation", vx=float(vx), vy=float(vy))

    @classmethod
    def rotation(cls, w):
        """Positively oriented rotation about the origin: v = w (-x2, x1)."""
        return cls("rotation", w=float(w))

    @classmethod
    def extensional(cls):
        """Time-periodic extensional flow
        v = cos(pi t) (cos(x2) sin(x1), -sin(x2) cos(x1)); divergence-free,
        elongates a drop and then restores it."""
        return cls("extensional")

    @classmethod
    def superposition(cls, *fields):
        return cls("superposition", fields=tuple(fields))

    def __call__(self, t, pts):
        pts = np.asarray(pts, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(pts)
        if self.kind == "translation":
            v = np.empty_like(pts)
            v[:, 0] = self.params["vx"]
            v[:, 1] = self.params["vy"]
            return v
        if self.kind == "rotation":
            w = self.params["w"]
            return w * np.column_stack([-pts[:, 1], pts[:, 0]])
        if self.kind == "extensional":
            c = np.cos(np.pi * t)
            return np.column_stack([
                c * np.cos(pts[:, 1]) * np.sin(pts[:, 0]),
                -c * np.sin(pts[:, 1]) * np.cos(pts[:, 0])])
        return sum(f(t, pts) for f in self.params["fields"])

    def divergence(self, t, pts, h=1e-5):
        """Central-difference divergence at the given points (a check that
        the field is volume preserving)."""
        pts = np.asarray(pts, dtype=float)
        ex = np.array([h, 0.0])
        ey = np.array([0.0, h])
        dvx = (self(t, pts + ex)[:, 0] - self(t, pts - ex)[:, 0]) / (2 * h)
        dvy = (self(t, pts + ey)[:, 1] - self(t, pts - ey)[:, 1]) / (2 * h)
        return dvx + dvy


# --------------------------------------------------------------------- #
# curves
# --------------------------------------------------------------------- #

class RotatedCurve:
    """A parametric curve rotated rigidly about the origin by angle theta."""

    def __init__(self, base, theta):
        self.base = base
        self.rot = np.exp(1j * theta)

    def position(self, t):
        return self.rot * self.base.position(t)

    def derivative(self, t):
        return self.rot * self.base.derivative(t)

    def second_derivative(self, t):
        return self.rot * self.base.second_derivative(t)


class TranslatedCurve:
    """A parametric curve translated by a complex offset."""

    def __init__(self, base, offset):
        self.base = base
        self.offset = complex(offset)

    def position(self, t):
        return self.base.position(t) + self.offset

    def derivative(self, t):
        return self.base.derivative(t)

    def second_derivative(self, t):
        return self.base.second_derivative(t)


# --------------------------------------------------------------------- #
# rigid body in a rotational flow, manufactured solution
# --------------------------------------------------------------------- #

class RotatingSolutionProblem:
    """u(t, x) = sin(y1) sin(y2) with y = R(-wt) x: a fixed profile rigidly
    advected by the rotation v = w (-x2, x1).  The advective derivative
    vanishes and Lap u = -2u, so the source F = 2 eps u makes u an exact
    solution of u_t + v . grad u = eps Lap u + F.

    The domain is a starfish curve rotating rigidly with the same field
    (or held fixed with moving=False; the solution is exact either way).
    """

    def __init__(self, eps=0.1, w=1.0, curve=None, n_panels=100,
                 moving=True):
        self.eps = float(eps)
        self.w = float(w)
        self.curve = curve if curve is not None else geom.StarfishCurve(
            a=0.05, b=5, center=1j)
        self.n_panels = int(n_panels)
        self.moving = bool(moving)
        self.field = VelocityField.rotation(self.w)
        self.rigid_key = ("rotating-rigid", id(self.curve), self.n_panels)
        self._fixed = geom.build_panels(self.curve, self.n_panels, t=0.0)

    def boundary_at(self, t, base):
        if not self.moving or self.w == 0.0:
            return self._fixed
        return geom.build_panels(RotatedCurve(self.curve, self.w * t),
                                 self.n_panels, t=t)

    def velocity(self, t, pts):
        return self.field(t, pts)

    def _back_rotated(self, t, pts):
        c, s = np.cos(self.w * t), np.sin(self.w * t)
        y1 = c * pts[:, 0] + s * pts[:, 1]
        y2 = -s * pts[:, 0] + c * pts[:, 1]
        return y1, y2

    def exact(self, t, pts):
        y1, y2 = self._back_rotated(t, pts)
        return np.sin(y1) * np.sin(y2)

    def exact_gradient(self, t, pts):
        y1, y2 = self._back_rotated(t, pts)
        g1 = np.cos(y1) * np.sin(y2)
        g2 = np.sin(y1) * np.cos(y2)
        c, s = np.cos(self.w * t), np.sin(self.w * t)
        return np.column_stack([c * g1 - s * g2, s * g1 + c * g2])

    def source(self, t, pts):
        return 2.0 * self.eps * self.exact(t, pts)

    def neumann(self, t, boundary):
        g = self.exact_gradient(t, boundary.x)
        return np.sum(g * boundary.normal, axis=1)

    def initial_u(self, pts):
        return self.exact(0.0, pts)

    def initial_gradient(self, pts):
        return self.exact_gradient(0.0, pts)

    def initial_laplacian(self, pts):
        return -2.0 * self.exact(0.0, pts)


# --------------------------------------------------------------------- #
# diffusing drop on an orbiting circle (mass conservation study)
# --------------------------------------------------------------------- #

class DiffusingDropProblem:
    """Unit circle centered at c(t) = (-sin t, cos t), carried rigidly by
    the rotation v = (-x2, x1); initial data cos(k r') + 1 with r' the
    distance to the center and k = 2 pi, which has zero normal derivative
    on the circle.  Homogeneous Neumann data and zero source: total mass
    is conserved while diffusion flattens the profile."""

    def __init__(self, eps=1e-2, k=2.0 * np.pi, n_panels=100):
        self.eps = float(eps)
        self.k = float(k)
        self.n_panels = int(n_panels)
        self.field = VelocityField.rotation(1.0)
        self.curve = geom.StarfishCurve(a=0.0, b=5)  # unit circle
        self.rigid_key = ("orbiting-circle", self.n_panels)

    def center(self, t):
        return np.array([-np.sin(t), np.cos(t)])

    def boundary_at(self, t, base):
        offset = complex(*self.center(t))
        return geom.build_panels(TranslatedCurve(self.curve, offset),
                                 self.n_panels, t=t)

    def velocity(self, t, pts):
        return self.field(t, pts)

    def source(self, t, pts):
        return np.zeros(len(pts))

    def neumann(self, t, boundary):
        return np.zeros(boundary.size)

    def radial_profile(self, r):
        return np.cos(self.k * r) + 1.0

    def initial_u(self, pts):
        r = np.linalg.norm(pts - self.center(0.0), axis=1)
        return self.radial_profile(r)

    def initial_gradient(self, pts):
        d = pts - self.center(0.0)
        r = np.linalg.norm(d, axis=1)
        dr = -self.k * np.sin(self.k * r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0.0, d / np.maximum(r, 1e-300)[:, None],
                            0.0)
        return dr[:, None] * unit

    def initial_laplacian(self, pts):
        r = np.linalg.norm(pts - self.center(0.0), axis=1)
        # radial Laplacian u'' + u'/r; the r -> 0 limit of u'/r is u''(0)
        upp = -self.k**2 * np.cos(self.k * r)
        with np.errstate(invalid="ignore", divide="ignore"):
            upr = np.where(r > 0.0,
                           -self.k * np.sin(self.k * r) / np.maximum(r, 1e-300),
                           -self.k**2)
        return upp + upr

    def exact(self, t, pts, n_modes=80):
        """Reference solution: in the co-moving frame the problem is radial
        heat flow on the unit disk with a no-flux wall, solved by a
        Bessel series (see disk_neumann_heat_reference)."""
        r = np.linalg.norm(pts - self.center(t), axis=1)
        return disk_neumann_heat_reference(self.radial_profile, self.eps, t,
                                           r, n_modes=n_modes)


def disk_neumann_heat_reference(profile, eps, t, r, n_modes=80,
                                n_quad=400):
    """Solution at time t and radii r of the radial heat equation
    u_t = eps (u_rr + u_r / r) on the unit disk with u_r(1) = 0 and initial
    data profile(r): a cosine-free Dini series u = c0 + sum c_j exp(-eps
    mu_j^2 t) J0(mu_j r) over the positive roots mu_j of J1."""
    from scipy import special

    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    rq = 0.5 * (nodes + 1.0)
    wq = 0.5 * weights
    f = profile(rq)
    c0 = 2.0 * np.sum(wq * rq * f)                    # mean over the disk
    mu = special.jnp_zeros(0, n_modes)                # roots of J0' = -J1
    phi = special.j0(np.outer(mu, rq))                # (modes, quad)
    # ||J0(mu r)||^2 on the disk with weight r is J0(mu)^2 / 2 at J1 roots
    norms = 0.5 * special.j0(mu) ** 2
    coef = np.sum(phi * (wq * rq * f)[None, :], axis=1) / norms
    decay = np.exp(-eps * mu**2 * t)
    return c0 + (coef * decay) @ special.j0(np.outer(mu, np.asarray(r)))


# --------------------------------------------------------------------- #
# deforming drops
# --------------------------------------------------------------------- #

class DeformingDropProblem:
    """Circle of radius 1.5 centered at the origin deformed by the
    time-periodic extensional field; Gaussian bump initial data with zero
    source and homogeneous Neumann walls.  The boundary has no analytic
    parametrization after t = 0 and is advected with the flow."""

    def __init__(self, eps=0.1, n_panels=100):
        self.eps = float(eps)
        self.n_panels = int(n_panels)
        self.field = VelocityField.extensional()
        self.curve = geom.StarfishCurve(a=0.0, b=5, scale=1.5)
        self.rigid_key = None

    def initial_boundary(self, t0):
        return geom.build_panels(self.curve, self.n_panels, t=t0)

    def velocity(self, t, pts):
        return self.field(t, pts)

    def source(self, t, pts):
        return np.zeros(len(pts))

    def neumann(self, t, boundary):
        return np.zeros(boundary.size)

    def initial_u(self, pts):
        return np.exp(-20.0 * pts[:, 0] ** 2) * np.exp(-20.0 * pts[:, 1] ** 2)


class RobustDropProblem:
    """Circle of radius 1.5 centered at (0, 0.5) deformed by the
    superposition of the unit rotation and the extensional field, with a
    radial cosine profile as initial data; exercises large deformations."""

    def __init__(self, eps=0.1, n_panels=100):
        self.eps = float(eps)
        self.n_panels = int(n_panels)
        self.field = VelocityField.superposition(
            VelocityField.rotation(1.0), VelocityField.extensional())
        self.center = np.array([0.0, 0.5])
        self.k = 2.0 * np.pi / 1.5
        self.curve = geom.StarfishCurve(a=0.0, b=5, center=0.5j, scale=1.5)
        self.rigid_key = None

    def initial_boundary(self, t0):
        return geom.build_panels(self.curve, self.n_panels, t=t0)

    def velocity(self, t, pts):
        return self.field(t, pts)

    def source(self, t, pts):
        return np.zeros(len(pts))

    def neumann(self, t, boundary):
        return np.zeros(boundary.size)

    def initial_u(self, pts):
        r = np.linalg.norm(pts - self.center, axis=1)
        return np.cos(self.k * r) + 1.0
