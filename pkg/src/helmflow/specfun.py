"""Special functions: modified Bessel functions, exponential integrals, and the
incomplete modified Bessel function of integer order nu in {-1, 0, 1}.

The incomplete modified Bessel function is defined by

    K_nu(rho1, rho2) = int_1^inf exp(-rho1*t - rho2/t) t^(-nu-1) dt,

for rho1 > 0, rho2 >= 0.  It interpolates between the exponential integral
(rho2 = 0) and the ordinary modified Bessel function of the second kind via

    K_nu(rho1, rho2) + K_(-nu)(rho2, rho1) = 2 (rho1/rho2)^(nu/2) K_nu(2 sqrt(rho1 rho2)).
"""

import numpy as np
from scipy import integrate, special

__all__ = [
    "bessel_k",
    "bessel_i",
    "exp_integral_e",
    "incomplete_bessel_k",
]

#: exponents beyond which exp(-x) underflows double precision
_EXP_UNDERFLOW = 745.0


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, order nu in {-1, 0, 1}."""
    if nu == 0:
        return special.k0(x)
    if nu in (1, -1):
        return special.k1(x)
    raise ValueError("order must be -1, 0 or 1")


def bessel_i(nu, x):
    """Modified Bessel function of the first kind, order nu in {-1, 0, 1}."""
    if nu == 0:
        return special.i0(x)
    if nu in (1, -1):
        return special.i1(x)
    raise ValueError("order must be -1, 0 or 1")


def exp_integral_e(n, x):
    """Generalized exponential integral E_n(x) = int_1^inf exp(-x t) t^(-n) dt."""
    return special.expn(n, x)


def _incomplete_bessel_k_scalar(nu, rho1, rho2):
    """K_nu(rho1, rho2) for scalar arguments via adaptive Gauss-Kronrod
    quadrature on the substituted integrand (t = e^s):

        K_nu(rho1, rho2) = int_0^inf exp(-rho1 e^s - rho2 e^{-s} - nu s) ds.

    The factor exp(-(rho1 + rho2)) is pulled out of the integral so that the
    quadrature works with an integrand of unit scale; if the prefactor
    underflows, 0.0 is returned.
    """
    if rho1 < 0.0 or rho2 < 0.0:
        raise ValueError("rho1 and rho2 must be non-negative")
    if rho1 == 0.0:
        if nu <= 0:
            return np.inf
        # nu == 1: closed form int_1^inf exp(-rho2/t) t^-2 dt
        if rho2 == 0.0:
            return 1.0
        return (1.0 - np.exp(-rho2)) / rho2
    if rho1 + rho2 > _EXP_UNDERFLOW:
        return 0.0

    # Upper limit S such that rho1*(e^S - 1) - nu*S >= 45, giving a truncated
    # tail below exp(-45) relative to the integrand peak at s = 0.
    target = 45.0
    s_hi = np.log1p(target / rho1)
    for _ in range(8):
        short = target + nu * s_hi - rho1 * np.expm1(s_hi)
        if short <= 0.0:
            break
        s_hi = np.log1p((target + max(nu * s_hi, 0.0)) / rho1)
        s_hi += 0.5
    s_hi = max(s_hi, 1e-3)

    def integrand(s):
        return np.exp(-rho1 * np.expm1(s) - rho2 * np.expm1(-s) - nu * s)

    val, _ = integrate.quad(integrand, 0.0, s_hi,
                            epsabs=1e-300, epsrel=1e-13, limit=200)
    return np.exp(-(rho1 + rho2)) * val


def incomplete_bessel_k(nu, rho1, rho2):
    """Incomplete modified Bessel function K_nu(rho1, rho2), nu in {-1, 0, 1}.

    Broadcasts over array inputs.  Values whose magnitude underflows double
    precision are returned as 0.0; K_nu(0, rho2) is +inf for nu <= 0.
    """
    if nu not in (-1, 0, 1):
        raise ValueError("order must be -1, 0 or 1")
    rho1 = np.asarray(rho1, dtype=float)
    rho2 = np.asarray(rho2, dtype=float)
    if rho1.ndim == 0 and rho2.ndim == 0:
        return _incomplete_bessel_k_scalar(nu, float(rho1), float(rho2))
    r1, r2 = np.broadcast_arrays(rho1, rho2)
    out = np.empty(r1.shape, dtype=float)
    flat1, flat2, flat_out = r1.ravel(), r2.ravel(), out.ravel()
    for i in range(flat1.size):
        flat_out[i] = _incomplete_bessel_k_scalar(nu, flat1[i], flat2[i])
    return out
