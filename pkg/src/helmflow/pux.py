"""Partition-of-unity extension (PUX) of grid functions across a smooth
boundary.

A function known at the uniform-grid points inside a domain is extended to a
compactly supported smooth function on the full grid.  Overlapping disc
partitions are centered at grid nodes along the inside of the boundary; in
each partition the data is fit with a Gaussian radial basis anchored at Vogel
nodes, evaluated outside, and the per-partition extensions are blended with
compactly supported Wu weight functions.  Extra zero partitions placed
outside the domain drive the blend smoothly to zero, making the global
extension compactly supported.

Because partition centers sit on grid nodes, the interpolation/evaluation
operator depends only on the grid offsets inside a partition and is built
once per (R, dx, basis) combination.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "vogel_nodes",
    "wu_eval",
    "build_interpolation_operator",
    "ExtensionOperator",
    "PartitionLayout",
    "build_layout",
    "LocalExtensions",
    "local_extension",
    "global_extension",
    "fill_slice",
    "write_layout_csv",
]

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))

# Wu functions psi^q(r), compactly supported on [0, 1], of increasing
# smoothness with q.
_WU_POLY = {
    1: (2, [2.0, 1.0]),
    2: (3, [8.0, 9.0, 3.0]),
    3: (4, [4.0, 16.0, 12.0, 3.0]),
    4: (5, [8.0, 40.0, 48.0, 25.0, 5.0]),
    5: (6, [6.0, 36.0, 82.0, 72.0, 30.0, 5.0]),
}


def vogel_nodes(n):
    """n Vogel (sunflower) nodes covering the unit disc:
    x_i = sqrt(i/n) (cos(i theta_g), sin(i theta_g)), golden angle theta_g."""
    i = np.arange(1, n + 1)
    r = np.sqrt(i / n)
    th = i * _GOLDEN_ANGLE
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def wu_eval(q, r):
    """Wu weight function psi^q at radii r (vanishes for r >= 1)."""
    if q not in _WU_POLY:
        raise ValueError("q must be in 1..5")
    power, coeffs = _WU_POLY[q]
    r = np.asarray(r, dtype=float)
    base = np.clip(1.0 - r, 0.0, None) ** power
    poly = np.zeros_like(r)
    for c in reversed(coeffs):
        poly = poly * r + c
    return base * poly


@dataclass
class ExtensionOperator:
    """Evaluation operator of the local Gaussian RBF fit at the canonical
    stencil of grid offsets covering one partition."""

    R: float
    dx: float
    n_g: int
    shape: float                 # Gaussian shape parameter epsilon
    offsets: np.ndarray          # (m, 2) int grid offsets with |offset|*dx <= R
    offset_r: np.ndarray         # (m,) |offset|*dx / R in [0, 1]
    A: np.ndarray                # (m, n_g): values at centers -> values at stencil
    centers: np.ndarray          # (n_g, 2) Vogel nodes scaled by R
    effective_rank: int

    @property
    def stencil_size(self):
        return self.offsets.shape[0]


_OPERATOR_CACHE = {}


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _two_prod(a, b):
    p = a * b
    ca = 134217729.0 * a
    ahi = ca - (ca - a)
    alo = a - ahi
    cb = 134217729.0 * b
    bhi = cb - (cb - b)
    blo = b - bhi
    return p, ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo


def _compensated_matmul(P, Mhi, Mlo):
    """P @ (Mhi + Mlo) with double-double accumulation (Dekker/Knuth
    error-free transformations), for products with severe cancellation."""
    S = np.zeros((P.shape[0], Mhi.shape[1]))
    E = np.zeros_like(S)
    for k in range(P.shape[1]):
        p, perr = _two_prod(P[:, k:k + 1], Mhi[k:k + 1, :])
        S, err = _two_sum(S, p)
        E += err + perr + P[:, k:k + 1] * Mlo[k:k + 1, :]
    return S + E


def build_interpolation_operator(R, dx, n_g=60, shape=2.0, cutoff=1e-14):
    """Build (or fetch from cache) the partition evaluation operator.

    The operator maps function values at the n_g scaled Vogel nodes to values
    of the Gaussian RBF interpolant at every grid point of the partition:
    A = Phi_stencil Phi_centers^{-1}.  The Gaussian basis is deliberately
    flat (shape * R well below 1), so Phi_centers is ill-conditioned far
    beyond double precision; the inverse is computed with mpmath and the
    cancellation-heavy product is evaluated in compensated (double-double)
    arithmetic, which keeps the well-scaled entries of A accurate to ~1e-13.
    Raises if the effective rank of the center Gram matrix (double-precision
    SVD with the given relative cutoff) falls below n_g / 2.
    """
    key = (round(R / dx, 9), n_g, round(shape * R, 9), cutoff)
    if key in _OPERATOR_CACHE:
        op = _OPERATOR_CACHE[key]
        if abs(op.R - R) < 1e-12 * R:
            return op

    half = int(np.floor(R / dx))
    ii, jj = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1),
                         indexing="ij")
    offsets = np.column_stack([ii.ravel(), jj.ravel()])
    rad = np.linalg.norm(offsets, axis=1) * dx
    keep = rad <= R
    offsets, rad = offsets[keep], rad[keep]

    centers = R * vogel_nodes(n_g)
    d2_cc = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    phi_cc = np.exp(-shape**2 * d2_cc)
    pts = offsets * dx
    d2_pc = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(-1)
    phi_pc = np.exp(-shape**2 * d2_pc)

    s = np.linalg.svd(phi_cc, compute_uv=False)
    rank = int(np.sum(s > cutoff * s[0]))
    if rank < n_g / 2:
        raise ValueError(
            f"Gaussian basis too degenerate: effective rank {rank} < {n_g}/2; "
            "increase shape * R or reduce n_g")

    import mpmath as mp
    with mp.workdps(50):
        phi_mp = mp.matrix(n_g, n_g)
        e2 = shape**2
        for i in range(n_g):
            for j in range(n_g):
                phi_mp[i, j] = mp.exp(-e2 * mp.mpf(d2_cc[i, j]))
        inv_mp = phi_mp**-1
        Mhi = np.array([[float(inv_mp[i, j]) for j in range(n_g)]
                        for i in range(n_g)])
        Mlo = np.array([[float(inv_mp[i, j] - mp.mpf(Mhi[i, j]))
                         for j in range(n_g)] for i in range(n_g)])
    A = _compensated_matmul(phi_pc, Mhi, Mlo)

    op = ExtensionOperator(R=R, dx=dx, n_g=n_g, shape=shape, offsets=offsets,
                           offset_r=rad / R, A=A, centers=centers,
                           effective_rank=rank)
    _OPERATOR_CACHE[key] = op
    return op


def operator_for_grid(R, dx, n_g=60, shape=2.0, cutoff=1e-14):
    """Build the evaluation operator with the basis size adapted to the grid:
    partitions straddle the boundary, so roughly 0.35 of a partition's
    stencil carries data, and the least-squares fit needs the data count to
    exceed the basis size with some margin.  On coarse grids the Vogel basis
    is therefore truncated (the sunflower ordering keeps any prefix of the
    nodes space-filling in radius)."""
    half = int(np.floor(R / dx))
    ii, jj = np.meshgrid(np.arange(-half, half + 1), np.arange(-half, half + 1),
                         indexing="ij")
    m = int(np.sum(np.hypot(ii, jj) * dx <= R))
    n_eff = min(n_g, int(0.35 * m / 1.3))
    if n_eff < 12:
        raise ValueError(
            f"partition radius {R} spans too few grid cells (dx={dx}) for a "
            "stable extension basis; increase R or refine the grid")
    return build_interpolation_operator(R, dx, n_g=n_eff, shape=shape,
                                        cutoff=cutoff)


@dataclass
class PartitionLayout:
    """Partition geometry for one (boundary snapshot, grid, mask) triple.

    Extension partitions are centered at the grid nodes inside the domain
    nearest to points equally spaced in arclength along the boundary (spacing
    0.75 R).  Zero partitions sit outside the domain along outward normals,
    pushed out until they are clear of the closed domain.
    """

    grid: object
    centers_ext: np.ndarray        # (P, 2) positions of extension centers
    center_idx: np.ndarray         # (P, 2) integer grid indices
    centers_zero: np.ndarray       # (Z, 2) positions of zero partitions
    part_flat: list                # per-partition flat grid indices (valid pts)
    part_rows: list                # per-partition rows into op.offsets
    part_inside: list              # per-partition bool: stencil point inside
    R: float

    @property
    def n_ext(self):
        return len(self.part_flat)


def build_layout(op, boundary, grid, mask_inside, spacing_factor=0.75,
                 zero_margin=2.0):
    """Construct the partition layout for a boundary snapshot on a grid.

    mask_inside: flat boolean of grid points inside the domain.
    """
    R, dx = op.R, grid.dx
    count = int(np.ceil(boundary.arclength / (spacing_factor * R)))
    bidx = boundary.equal_arclength_points(count)
    bpts = boundary.x[bidx]
    bnrm = boundary.normal[bidx]

    # snap to nearest grid node inside the domain
    gi, gj = grid.index_of(bpts)
    n = grid.n
    centers_idx = []
    for k in range(len(bpts)):
        i0, j0 = int(gi[k]), int(gj[k])
        best, bestd = None, np.inf
        for di in (0, -1, 1, -2, 2):
            for dj in (0, -1, 1, -2, 2):
                i, j = i0 + di, j0 + dj
                if 0 <= i < n and 0 <= j < n and mask_inside[i * n + j]:
                    p = np.array([grid.axis[i], grid.axis[j]])
                    d = np.hypot(*(p - bpts[k]))
                    if d < bestd:
                        best, bestd = (i, j), d
        if best is None:
            raise ValueError("no interior grid node near boundary point; "
                             "grid too coarse for this partition radius")
        centers_idx.append(best)
    center_idx = np.array(centers_idx)
    centers_ext = np.column_stack([grid.axis[center_idx[:, 0]],
                                   grid.axis[center_idx[:, 1]]])

    # Zero partitions: one per extension partition, at distance R plus a
    # small grid margin outside along the boundary normal, so the zero
    # weight turns on a couple of cells outside the boundary and develops
    # on the partition-radius scale.  Centers whose discs would intersect
    # the closed domain (concave necks) are pushed further outward a few
    # times and dropped if that fails.
    margin = zero_margin * dx
    centers_zero = []
    for k in range(len(bpts)):
        c = bpts[k] + (R + margin) * bnrm[k]
        for _ in range(3):
            d, _i = boundary.nearest_node(c[None])
            if d[0] >= R + 0.5 * margin:
                centers_zero.append(c)
                break
            c = c + (R + margin - d[0]) * bnrm[k]
    centers_zero = (np.array(centers_zero) if centers_zero
                    else np.empty((0, 2)))

    # Safety ring: coarsely subsampled grid nodes with clearance in
    # [R + margin, 2R], so the outer rim of every extension partition lies
    # inside the zero cover even where the normal-push centers were dropped
    # (deep concavities).  These sit far from the boundary band, so they do
    # not disturb the extension near the domain.
    stride = max(int(0.4 * R / dx), 1)
    sub = np.arange(0, n, stride)
    ii, jj = np.meshgrid(sub, sub, indexing="ij")
    flat = (ii * n + jj).ravel()
    cand = np.column_stack([grid.axis[ii.ravel()], grid.axis[jj.ravel()]])
    outside = ~mask_inside[flat]
    dring, _ = boundary.nearest_node(cand[outside])
    ring = (dring >= R + margin) & (dring <= 2.0 * R)
    if ring.any():
        centers_zero = np.vstack([centers_zero, cand[outside][ring]])

    # per-partition stencil bookkeeping
    part_flat, part_rows, part_inside = [], [], []
    for k in range(len(center_idx)):
        ci, cj = center_idx[k]
        ii = ci + op.offsets[:, 0]
        jj = cj + op.offsets[:, 1]
        valid = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
        rows = np.flatnonzero(valid)
        flat = ii[valid] * n + jj[valid]
        part_flat.append(flat)
        part_rows.append(rows)
        part_inside.append(mask_inside[flat])

    return PartitionLayout(grid=grid, centers_ext=centers_ext,
                           center_idx=center_idx, centers_zero=centers_zero,
                           part_flat=part_flat, part_rows=part_rows,
                           part_inside=part_inside, R=R)


def local_extension(op, layout, k, f_flat, rcond=1e-12):
    """Least-squares coefficients (values at the scaled Vogel nodes) of the
    local RBF fit of partition k to the inside data of f_flat."""
    rows = layout.part_rows[k][layout.part_inside[k]]
    idx = layout.part_flat[k][layout.part_inside[k]]
    if len(rows) < op.n_g / 4:
        raise ValueError(
            f"partition {k}: only {len(rows)} interior grid points for "
            f"{op.n_g} basis functions; grid too coarse")
    sol, *_ = linalg.lstsq(op.A[rows], f_flat[idx],
                           cond=rcond, lapack_driver="gelsy")
    return sol


class LocalExtensions:
    """All per-partition local extension coefficients for one data array."""

    def __init__(self, op, layout, f_flat, rcond=1e-12):
        self.op = op
        self.layout = layout
        self.f_flat = f_flat
        self.coef = [local_extension(op, layout, k, f_flat, rcond)
                     for k in range(layout.n_ext)]


def _accumulate_blend(ext, q, include_zero):
    """Shepard numerator/denominator over the full grid (flat arrays)."""
    op, layout = ext.op, ext.layout
    grid = layout.grid
    npts = grid.n * grid.n
    num = np.zeros(npts)
    den = np.zeros(npts)
    covered = np.zeros(npts, dtype=bool)
    psi_all = wu_eval(q, op.offset_r)
    for k in range(layout.n_ext):
        rows = layout.part_rows[k]
        flat = layout.part_flat[k]
        psi = psi_all[rows]
        vals = op.A[rows] @ ext.coef[k]
        num[flat] += psi * vals
        den[flat] += psi
        covered[flat] = True
    if include_zero and len(layout.centers_zero):
        pts = grid.points
        for c in layout.centers_zero:
            lo = grid.index_of((c - op.R)[None])
            hi = grid.index_of((c + op.R)[None])
            i0 = max(int(lo[0][0]), 0)
            i1 = min(int(hi[0][0]) + 1, grid.n)
            j0 = max(int(lo[1][0]), 0)
            j1 = min(int(hi[1][0]) + 1, grid.n)
            if i0 >= i1 or j0 >= j1:
                continue
            ii, jj = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1),
                                 indexing="ij")
            flat = (ii * grid.n + jj).ravel()
            r = np.linalg.norm(pts[flat] - c, axis=1) / op.R
            psi = wu_eval(q, r)
            nz = psi > 0.0
            den[flat[nz]] += psi[nz]
    return num, den, covered


def global_extension(op, layout, mask_inside, f_flat, q=3, compact=True,
                     extensions=None):
    """Extend grid data smoothly across the boundary.

    Returns the flat grid array f_e with f_e = f at inside points, the
    Shepard blend of local extensions at covered outside points, and zero
    elsewhere.  With compact=True the zero partitions participate in the
    blend, so f_e decays smoothly to zero; with compact=False the blend uses
    extension partitions only (used to fill thin slices next to the boundary
    with full accuracy).
    """
    ext = extensions or LocalExtensions(op, layout, f_flat)
    num, den, covered = _accumulate_blend(ext, q, include_zero=compact)
    f_e = np.zeros_like(f_flat)
    blend = covered & ~mask_inside & (den > 0.0)
    f_e[blend] = num[blend] / den[blend]
    f_e[mask_inside] = f_flat[mask_inside]
    return f_e


def fill_slice(op, layout, mask_inside, f_flat, slice_flat, q=3,
               extensions=None):
    """Values of the (non-compact) extension of f at the flat grid indices
    slice_flat, which must lie within the partition cover."""
    ext = extensions or LocalExtensions(op, layout, f_flat)
    slice_flat = np.asarray(slice_flat)
    num = np.zeros(len(slice_flat))
    den = np.zeros(len(slice_flat))
    pos = {int(g): i for i, g in enumerate(slice_flat)}
    psi_all = wu_eval(q, op.offset_r)
    for k in range(layout.n_ext):
        flat = layout.part_flat[k]
        rows = layout.part_rows[k]
        hit_rows = [(r, pos[int(g)]) for r, g in zip(rows, flat) if int(g) in pos]
        if not hit_rows:
            continue
        rsel = np.array([h[0] for h in hit_rows])
        osel = np.array([h[1] for h in hit_rows])
        psi = psi_all[rsel]
        vals = op.A[rsel] @ ext.coef[k]
        num[osel] += psi * vals
        den[osel] += psi
    if np.any(den == 0.0):
        raise ValueError("slice point not covered by any extension partition")
    return num / den


def write_layout_csv(path_or_file, layout):
    """Write partition centers as CSV with columns kind,x1,x2 (kind is
    'extension' or 'zero')."""
    own = isinstance(path_or_file, (str, bytes))
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(f)
        writer.writerow(["kind", "x1", "x2"])
        for c in layout.centers_ext:
            writer.writerow(["extension", repr(float(c[0])), repr(float(c[1]))])
        for c in layout.centers_zero:
            writer.writerow(["zero", repr(float(c[0])), repr(float(c[1]))])
    finally:
        if own:
            f.close()
