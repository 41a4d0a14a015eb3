"""Spectral Ewald summation for discrete single-layer sums of the modified
Helmholtz equation in free space.

The target sums are

    u(x)      = (1/2pi) sum_n K_0(alpha |y_n - x|) f_n,
    grad u(x) = (1/2pi) sum_n alpha K_1(alpha r_n) (y_n - x)/r_n f_n,

split by a screening parameter xi into a rapidly decaying real-space sum, a
rapidly converging Fourier-space sum evaluated with window gridding and
FFTs, and a self-interaction term:

    real kernel       (1/2) K_0(r^2 xi^2, alpha^2 / 4 xi^2)
    gradient kernel   xi^2 (y - x) K_{-1}(r^2 xi^2, alpha^2 / 4 xi^2)
    k-space multiplier  2 pi exp(-(alpha^2 + |k|^2)/4 xi^2) / (alpha^2 + |k|^2)
    self term         -E_1(alpha^2 / 4 xi^2) / 4 pi   (value only)

with K_nu(.,.) the incomplete modified Bessel function.  For small alpha the
k-space multiplier is nearly singular at k = 0; it is then replaced by the
transform of the kernel truncated at radius R (finite at k = 0) and the FFT
box is enlarged so the truncated kernel does not alias.

Closed-form RMS truncation-error estimates drive the parameter selection.
An O(N^2) direct sum serves as the accuracy oracle throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import j0, j1, k0, k1

from .gridding import GaussianWindow
from .specfun import exp_integral_e, incomplete_bessel_k

__all__ = [
    "SourceSet",
    "EwaldPlan",
    "build_plan",
    "direct_sum",
    "real_space_sum",
    "self_term",
    "kspace_sum",
    "truncated_kspace_kernel",
    "estimate_truncation",
    "select_parameters",
    "ewald_sum",
]

TWO_PI = 2.0 * np.pi
# below this value of alpha*R the k-space multiplier is switched to the
# truncated-kernel form (the correction factors K_0(alpha R), K_1(alpha R)
# are no longer negligible)
TRUNCATION_SWITCH = 20.0


@dataclass(frozen=True)
class SourceSet:
    """Discrete sources: points y_n (N, 2) and scalar weights f_n."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, float).ravel())
        if self.points.shape[0] != self.weights.shape[0]:
            raise ValueError("points and weights must have matching length")
        if not np.all(np.isfinite(self.points)) or not np.all(np.isfinite(self.weights)):
            raise ValueError("sources must be finite")

    @property
    def count(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class EwaldPlan:
    """Parameters for one Ewald split.

    xi:     splitting parameter
    r_c:    real-space cutoff radius
    k_inf:  k-space truncation (radial) wavenumber
    M:      spreading-grid points per dimension
    h:      spreading-grid spacing
    origin: lower-left coordinate of the spreading grid (both dimensions)
    L:      side of the data box containing sources and targets
    R:      physical truncation radius of the k-space kernel
    p, eta: window support (grid points) and shape
    grid_aligned: evaluation grid is a subset of the spreading grid
    """

    xi: float
    r_c: float
    k_inf: float
    M: int
    h: float
    origin: float
    L: float
    R: float
    p: int = 24
    eta: float = 0.95**2 * np.pi * 24 / 2
    grid_aligned: bool = False

    @property
    def box_length(self):
        return self.M * self.h


def build_plan(alpha, L, xi, r_c, k_inf, p=24, grid=None):
    """Construct an EwaldPlan.  If `grid` (a UniformGrid) is given, the
    spreading grid is aligned with it so grid targets can be read off
    without the final gather step."""
    L = float(L)
    # R must exceed the largest pairwise distance sqrt(2) L by a few
    # screening widths 1/xi: the k-space Gaussian smears the sharp cutoff,
    # so placing it exactly at the max distance leaves an O(K_0(alpha R))
    # error at the most distant pairs.
    R = np.sqrt(2.0) * L + 4.0 / xi
    if alpha * np.sqrt(2.0) * L < TRUNCATION_SWITCH:
        # free-space aliasing: periodic images of the R-truncated kernel
        # must stay beyond every true interaction distance, plus a few
        # screening widths for the Gaussian-smeared cutoff edge
        box_target = L + R + 4.0 / xi
    else:
        # untruncated kernel decays like exp(-alpha r); pad until image
        # contributions are negligible
        box_target = L + 30.0 / alpha
    if grid is not None:
        h = grid.dx
        n_pad = int(np.ceil(max(box_target - L, 0.0) / (2.0 * h))) + 1
        M = grid.n + 2 * n_pad
        if M % 2:
            M += 1
        origin = -0.5 * L - n_pad * h
        aligned = True
        # the aligned grid caps the resolvable band
        k_inf = min(k_inf, np.pi / h)
    else:
        M = 2 * int(np.ceil(k_inf * box_target / TWO_PI))
        M = max(M, p + 2)
        h = box_target / M
        origin = -0.5 * box_target
        aligned = False
    if p > M:
        raise ValueError("window support exceeds the spreading grid")
    eta = 0.95**2 * np.pi * p / 2.0
    return EwaldPlan(
        xi=float(xi), r_c=float(r_c), k_inf=float(k_inf), M=M, h=h,
        origin=origin, L=L, R=R, p=p, eta=eta, grid_aligned=aligned,
    )


# --------------------------------------------------------------------- #
# direct O(N^2) oracle
# --------------------------------------------------------------------- #
def direct_sum(sources, targets, alpha, want_gradient=False, exclude_self=False):
    """Brute-force evaluation of the single-layer sum (and gradient)."""
    y = sources.points
    f = sources.weights
    x = np.atleast_2d(np.asarray(targets, float))
    u = np.zeros(x.shape[0])
    g = np.zeros_like(x)
    chunk = max(1, 20_000_000 // max(1, y.shape[0]))
    for s in range(0, x.shape[0], chunk):
        d = y[None, :, :] - x[s : s + chunk, None, :]
        r = np.hypot(d[:, :, 0], d[:, :, 1])
        coincident = r < 1e-14
        if np.any(coincident):
            if not exclude_self:
                raise ValueError("coincident source and target without self-exclusion")
            r = np.where(coincident, 1.0, r)
        ku = k0(alpha * r)
        kg = alpha * k1(alpha * r) / r
        if exclude_self:
            ku = np.where(coincident, 0.0, ku)
            kg = np.where(coincident, 0.0, kg)
        u[s : s + chunk] = ku @ f / TWO_PI
        if want_gradient:
            g[s : s + chunk, 0] = (kg * d[:, :, 0]) @ f / TWO_PI
            g[s : s + chunk, 1] = (kg * d[:, :, 1]) @ f / TWO_PI
    return (u, g) if want_gradient else u


# --------------------------------------------------------------------- #
# real-space sum
# --------------------------------------------------------------------- #
_CHEB_CACHE = {}


def _smooth_kernel_cheb(nu, rho2, s_max):
    """Chebyshev interpolant of s -> K_nu(rho2, s) on [0, s_max]; the
    function is entire in s, so the interpolant converges geometrically."""
    key = (nu, round(float(rho2), 12), round(float(s_max), 9))
    if key not in _CHEB_CACHE:
        deg = min(1200, max(48, int(1.6 * s_max) + 24))
        fn = np.vectorize(lambda s: incomplete_bessel_k(nu, rho2, s))
        _CHEB_CACHE[key] = np.polynomial.chebyshev.Chebyshev.interpolate(
            fn, deg, domain=[0.0, s_max]
        )
    return _CHEB_CACHE[key]


def _cell_neighbors(sources, targets, r_c):
    """Yield (target-index array, source-index array) pairs grouping targets
    by cell of a uniform cell list with edge r_c."""
    y = sources.points
    x = targets
    cell_y = np.floor(y / r_c).astype(np.int64)
    cell_x = np.floor(x / r_c).astype(np.int64)
    # pack 2d cell coordinates into single keys
    allc = np.vstack([cell_y, cell_x])
    base = allc.min(axis=0) - 2
    span = int(allc[:, 1].max() - base[1] + 3)

    def pack(c):
        return (c[:, 0] - base[0]) * span + (c[:, 1] - base[1])

    key_y = pack(cell_y)
    order = np.argsort(key_y, kind="stable")
    sorted_keys = key_y[order]
    uniq, starts = np.unique(sorted_keys, return_index=True)
    lookup = dict(zip(uniq.tolist(), range(len(uniq))))
    ends = np.append(starts[1:], len(sorted_keys))

    key_x = pack(cell_x)
    x_order = np.argsort(key_x, kind="stable")
    sorted_x = key_x[x_order]
    xu, xs = np.unique(sorted_x, return_index=True)
    xe = np.append(xs[1:], len(sorted_x))
    for cell_key, a, b in zip(xu.tolist(), xs, xe):
        tgt_idx = x_order[a:b]
        src_parts = []
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                nk = cell_key + di * span + dj
                j = lookup.get(nk)
                if j is not None:
                    src_parts.append(order[starts[j] : ends[j]])
        if src_parts:
            yield tgt_idx, np.concatenate(src_parts)


def real_space_sum(sources, targets, alpha, plan, want_gradient=False):
    """Truncated real-space sum over source points within r_c of each
    target.  Exactly coincident pairs contribute nothing here; their value
    contribution is the separate self term."""
    x = np.atleast_2d(np.asarray(targets, float))
    u = np.zeros(x.shape[0])
    g = np.zeros_like(x)
    xi, r_c = plan.xi, plan.r_c
    rho2 = alpha**2 / (4.0 * xi**2)
    s_max = (r_c * xi) ** 2 * 1.0000001
    cheb0 = _smooth_kernel_cheb(0, rho2, s_max)
    cheb1 = _smooth_kernel_cheb(1, rho2, s_max)
    y = sources.points
    f = sources.weights
    for tgt_idx, src_idx in _cell_neighbors(sources, x, r_c):
        d = y[src_idx][None, :, :] - x[tgt_idx][:, None, :]
        r = np.hypot(d[:, :, 0], d[:, :, 1])
        mask = (r < r_c) & (r > 1e-14)
        r_safe = np.where(mask, r, 1.0)
        s = (r_safe * xi) ** 2
        # (1/2) K_0(r^2 xi^2, rho2) = K_0(alpha r) - (1/2) K_0(rho2, r^2 xi^2)
        val = k0(alpha * r_safe) - 0.5 * cheb0(s)
        val = np.where(mask, val, 0.0)
        u[tgt_idx] += (val @ f[src_idx]) / TWO_PI
        if want_gradient:
            # xi^2 K_{-1}(r^2 xi^2, rho2)
            #   = (alpha / r) K_1(alpha r) - xi^2 K_1(rho2, r^2 xi^2)
            kg = alpha * k1(alpha * r_safe) / r_safe - xi**2 * cheb1(s)
            kg = np.where(mask, kg, 0.0)
            g[tgt_idx, 0] += ((kg * d[:, :, 0]) @ f[src_idx]) / TWO_PI
            g[tgt_idx, 1] += ((kg * d[:, :, 1]) @ f[src_idx]) / TWO_PI
    return (u, g) if want_gradient else u


def self_term(alpha, xi):
    """Value-sum contribution of a source coinciding with the target:
    -E_1(alpha^2 / 4 xi^2) / 4 pi.  The gradient counterpart vanishes."""
    return -exp_integral_e(1, alpha**2 / (4.0 * xi**2)) / (4.0 * np.pi)


# --------------------------------------------------------------------- #
# k-space sum
# --------------------------------------------------------------------- #
def truncated_kspace_kernel(k, alpha, xi, R, gradient_factor=False):
    """k-space multiplier of the kernel truncated at radius R:

        2 pi / (alpha^2 + |k|^2)
          * (1 + R|k| J_1(|k|R) K_0(alpha R) - alpha R J_0(|k|R) K_1(alpha R))
          * exp(-(alpha^2 + |k|^2) / 4 xi^2),

    finite at k = 0 uniformly in alpha.  With gradient_factor=True the
    i*k vector factor is applied (returns a (..., 2) array)."""
    k = np.asarray(k, float)
    if k.shape[-1] != 2:
        raise ValueError("k must have wavevector components along the last axis")
    kn = np.hypot(k[..., 0], k[..., 1])
    corr = 1.0 + R * kn * j1(kn * R) * k0(alpha * R) - alpha * R * j0(kn * R) * k1(alpha * R)
    base = TWO_PI / (alpha**2 + kn**2) * corr * np.exp(-(alpha**2 + kn**2) / (4.0 * xi**2))
    if gradient_factor:
        return 1j * k * base[..., None]
    return base


def _plain_kspace_kernel(kn2, alpha, xi):
    return TWO_PI / (alpha**2 + kn2) * np.exp(-(alpha**2 + kn2) / (4.0 * xi**2))


def kspace_sum(sources, targets, alpha, plan, want_gradient=False,
               grid_targets=False):
    """Window-gridded evaluation of the k-space sum: spread the source
    weights to the grid, FFT, scale by the k-space multiplier over the
    squared window transform, inverse FFT, and gather at the targets.

    With grid_targets=True (requires a grid-aligned plan) the targets must
    lie on spreading-grid nodes; the gather is replaced by reading the grid
    values, and only one window-transform division is applied."""
    if grid_targets and not plan.grid_aligned:
        raise ValueError("grid-target mode requires a grid-aligned plan")
    M, h = plan.M, plan.h
    win = GaussianWindow(M, plan.box_length, p=plan.p, origin=plan.origin)
    H = win.spread(sources.points, sources.weights)
    Hhat = np.fft.fft2(H)
    kv = TWO_PI * np.fft.fftfreq(M, d=h)
    k1g = kv[:, None]
    k2g = kv[None, :]
    kn2 = k1g**2 + k2g**2
    if alpha * np.sqrt(2.0) * plan.L < TRUNCATION_SWITCH:
        kn = np.sqrt(kn2)
        corr = (1.0 + plan.R * kn * j1(kn * plan.R) * k0(alpha * plan.R)
                - alpha * plan.R * j0(kn * plan.R) * k1(alpha * plan.R))
        Fhat = TWO_PI / (alpha**2 + kn2) * corr * np.exp(
            -(alpha**2 + kn2) / (4.0 * plan.xi**2)
        )
    else:
        Fhat = _plain_kspace_kernel(kn2, alpha, plan.xi)
    Fhat = np.where(kn2 <= plan.k_inf**2, Fhat, 0.0)
    wk = win.fourier_weights(k1g, k2g)
    if np.min(wk[kn2 <= plan.k_inf**2]) < 1e-8:
        raise ValueError("window transform too small on the resolved band")
    scale = Fhat * h**2 / (TWO_PI * plan.box_length**2)
    Shat = Hhat * scale / (wk if grid_targets else wk**2)

    x = np.atleast_2d(np.asarray(targets, float))

    def render(spec):
        G = np.fft.ifft2(spec).real * M**2
        if grid_targets:
            idx = np.rint((x - plan.origin) / h).astype(int)
            if np.max(np.abs(x - (plan.origin + idx * h))) > 1e-9 * h:
                raise ValueError("targets are not on the spreading grid")
            return G[idx[:, 0] % M, idx[:, 1] % M]
        return win.gather(x, G)

    u = render(Shat)
    if not want_gradient:
        return u
    kd = kv.copy()
    kd[M // 2] = 0.0
    gx = render(1j * kd[:, None] * Shat)
    gy = render(1j * kd[None, :] * Shat)
    return u, np.column_stack([gx, gy])


def ewald_sum(sources, targets, alpha, plan, want_gradient=False,
              targets_are_sources=False, grid_targets=False):
    """Full Ewald evaluation: real sum + k-space sum (+ self term for
    targets that coincide with sources, value part only)."""
    res_r = real_space_sum(sources, targets, alpha, plan, want_gradient)
    res_k = kspace_sum(sources, targets, alpha, plan, want_gradient,
                       grid_targets=grid_targets)
    if want_gradient:
        u = res_r[0] + res_k[0]
        g = res_r[1] + res_k[1]
    else:
        u = res_r + res_k
    if targets_are_sources:
        u = u + self_term(alpha, plan.xi) * sources.weights
    return (u, g) if want_gradient else u


# --------------------------------------------------------------------- #
# truncation-error estimates and parameter selection
# --------------------------------------------------------------------- #
def estimate_truncation(kind, Q, L, alpha, xi, r_c=None, k_inf=None, R=None):
    """Closed-form RMS truncation-error estimates.

    kind: 'real_u' | 'real_grad' | 'k_u' | 'k_grad'.  Q = sum f_n^2.
    """
    if kind == "real_u":
        var = np.pi * Q / (4.0 * L**2 * r_c**4 * xi**6) * np.exp(-2.0 * r_c**2 * xi**2)
    elif kind == "real_grad":
        var = np.pi * Q / (L**2 * alpha**2 * r_c**2 * xi**2) * np.exp(
            -2.0 * r_c**2 * xi**2
        )
    elif kind == "k_u":
        if R is None:
            R = np.sqrt(2.0) * L
        bracket = (1.0 / np.sqrt(2.0 * np.pi * k_inf)
                   - alpha * k0(alpha * R) / np.sqrt(R * np.pi)
                   - alpha * np.sqrt(R) * k1(alpha * R) / (np.pi * k_inf))
        var = (64.0 * np.pi * Q * xi**4 / (L * (alpha**2 + k_inf**2) ** 2)
               * np.exp(-(alpha**2 + k_inf**2) / (2.0 * xi**2)) * bracket**2)
    elif kind == "k_grad":
        if R is None:
            R = np.sqrt(2.0) * L
        bracket = (np.sqrt(2.0 * np.pi * k_inf)
                   - 8.0 * alpha * k0(alpha * R) * k_inf / np.sqrt(R)
                   - 2.0 * alpha * np.sqrt(R) * k1(alpha * R))
        var = (8.0 * Q * xi**2 / (L * np.pi**2 * alpha**2)
               * np.exp(-(alpha**2 + k_inf**2) / (2.0 * xi**2))
               / (alpha**2 + k_inf**2) ** 2 * bracket**2)
    else:
        raise ValueError(f"unknown estimate kind {kind!r}")
    return float(np.sqrt(var))


def _bisect_decreasing(fn, lo, hi, target, iters=200):
    """Find x with fn(x) = target for fn decreasing on [lo, hi]."""
    if fn(lo) <= target:
        return lo
    if fn(hi) > target:
        return None
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def select_parameters(N, tol, alpha, L, Q=None, neighbors=30, p=24, grid=None):
    """Choose an Ewald split meeting the RMS tolerance: r_c from the
    constant-neighbor rule, then xi from the real-space estimate, then
    k_inf from the k-space estimate."""
    if Q is None:
        Q = float(N)
    r_c = min(L * np.sqrt(neighbors / (np.pi * N)), 0.45 * L)
    xi = _bisect_decreasing(
        lambda s: estimate_truncation("real_u", Q, L, alpha, s, r_c=r_c),
        0.05, 1e4, tol,
    )
    if xi is None:
        raise ValueError("tolerance infeasible: real-space estimate binding")
    k_inf = _bisect_decreasing(
        lambda k: estimate_truncation("k_u", Q, L, alpha, xi, k_inf=k),
        max(alpha, 1.0), 1e6, tol,
    )
    if k_inf is None:
        raise ValueError("tolerance infeasible: k-space estimate binding")
    return build_plan(alpha, L, xi, r_c, k_inf, p=p, grid=grid)
