"""Gaussian-window gridding between scattered points and a periodic uniform
grid (spreading / gathering), shared by the spectral Ewald k-space sum and
the fast evaluation of truncated Fourier series at off-grid points.

The window is a truncated Gaussian supported on p x p grid cells,

    w(x) = exp(-4 eta |x|^2 / (p h)^2),   |x_i| <= p h / 2,

with eta = (0.95)^2 pi p / 2, whose shape balances the truncation error of
the Gaussian tail against its resolution on the grid.  Its Fourier transform
is taken as that of the untruncated Gaussian (the tail is below 1e-14).
"""

import numpy as np

__all__ = ["GaussianWindow"]


class GaussianWindow:
    """Window gridding on the periodic grid x_j = -L/2 + j h, j = 0..n-1,
    h = L / n (period L in each dimension)."""

    def __init__(self, n, L, p=24, eta_factor=0.95, origin=None):
        self.n = int(n)
        self.L = float(L)
        self.h = self.L / self.n
        self.origin = -0.5 * self.L if origin is None else float(origin)
        self.p = int(p)
        self.eta = eta_factor**2 * np.pi * self.p / 2.0
        self.a = 4.0 * self.eta / (self.p * self.h) ** 2
        # window sample offsets relative to the nearest grid node
        self.offsets = np.arange(self.p) - self.p // 2

    def _window_samples(self, points):
        """Per-point grid indices (periodic) and tensor window values."""
        pts = np.atleast_2d(points)
        t = (pts - self.origin) / self.h
        m0 = np.rint(t).astype(int)
        # grid indices covered by the window, per dimension
        ix = (m0[:, 0:1] + self.offsets[None, :]) % self.n
        iy = (m0[:, 1:2] + self.offsets[None, :]) % self.n
        dx = (m0[:, 0:1] + self.offsets[None, :]) * self.h - (pts[:, 0:1] - self.origin)
        dy = (m0[:, 1:2] + self.offsets[None, :]) * self.h - (pts[:, 1:2] - self.origin)
        wx = np.exp(-self.a * dx**2)
        wy = np.exp(-self.a * dy**2)
        return ix, iy, wx, wy

    def spread(self, points, values):
        """Scatter point values onto the grid through the window:
        H[j] = sum_n values_n w(x_j - x_n).  Returns an (n, n) array."""
        ix, iy, wx, wy = self._window_samples(points)
        values = np.asarray(values, dtype=float)
        w = (values[:, None, None] * wx[:, :, None] * wy[:, None, :]).ravel()
        flat = (ix[:, :, None] * self.n + iy[:, None, :]).ravel()
        H = np.bincount(flat, weights=w, minlength=self.n * self.n)
        return H.reshape(self.n, self.n)

    def gather(self, points, H):
        """Window-weighted trapezoidal quadrature of the grid field H at the
        points: u(x) = h^2 sum_j w(x - x_j) H[j]."""
        ix, iy, wx, wy = self._window_samples(points)
        flat = ix[:, :, None] * self.n + iy[:, None, :]
        vals = H.reshape(-1)[flat]
        return self.h**2 * np.einsum("npq,np,nq->n", vals, wx, wy)

    def fourier_weights(self, k1, k2):
        """Fourier transform of the (untruncated) window at wavenumbers
        (k1, k2): what(k) = (pi/a) exp(-(k1^2 + k2^2) / (4a))."""
        return (np.pi / self.a) * np.exp(-(k1**2 + k2**2) / (4.0 * self.a))
