"""
Pure-Python (numpy) implementations of the covariance hot loops.

Same signatures and results as the compiled ``windgp._kernels`` module;
used when the extension is not built or ``WINDGP_BACKEND=python`` is set.
"""

import math

import numpy as np
from scipy import special

__all__ = ["matern_of_arg", "ns_matern_cross", "ns_gauss_cross", "projection_alpha"]


def matern_of_arg(arg, nu):
    """Unit-variance Matern correlation ``x^nu K_nu(x) / (2^(nu-1) Gamma(nu))``."""
    arg = np.asarray(arg, dtype=float)
    out = np.ones_like(arg)
    pos = arg > 0
    x = arg[pos]
    norm = 1.0 / (2.0 ** (nu - 1.0) * math.gamma(nu))
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        val = norm * x**nu * special.kv(nu, x)
    # kv underflows to 0 at large x while x**nu stays finite
    val[~np.isfinite(val)] = 0.0
    out[pos] = val
    return out


def _pair_terms(xa, sa, xb, sb):
    xa = np.asarray(xa, dtype=float)
    xb = np.asarray(xb, dtype=float)
    sa = np.asarray(sa, dtype=float)
    sb = np.asarray(sb, dtype=float)
    d0 = xa[:, None, 0] - xb[None, :, 0]
    d1 = xa[:, None, 1] - xb[None, :, 1]
    m00 = 0.5 * (sa[:, None, 0, 0] + sb[None, :, 0, 0])
    m01 = 0.5 * (sa[:, None, 0, 1] + sb[None, :, 0, 1])
    m11 = 0.5 * (sa[:, None, 1, 1] + sb[None, :, 1, 1])
    det_avg = m00 * m11 - m01 * m01
    q = (d0 * d0 * m11 - 2.0 * d0 * d1 * m01 + d1 * d1 * m00) / det_avg
    det_a = sa[:, 0, 0] * sa[:, 1, 1] - sa[:, 0, 1] * sa[:, 1, 0]
    det_b = sb[:, 0, 0] * sb[:, 1, 1] - sb[:, 0, 1] * sb[:, 1, 0]
    pref = det_a[:, None] ** 0.25 * det_b[None, :] ** 0.25 / np.sqrt(det_avg)
    return pref, np.maximum(q, 0.0)


def ns_matern_cross(xa, sa, xb, sb, nu, symmetric=False):
    """
    Nonstationary Matern correlation between two site sets.

    Parameters
    ----------
    xa, xb : (na, 2), (nb, 2) arrays
        Site coordinates.
    sa, sb : (na, 2, 2), (nb, 2, 2) arrays
        Kernel matrix at each site.
    nu : float
        Smoothness.
    symmetric : bool
        Hint that ``xb is xa``; ignored here.

    Returns
    -------
    (na, nb) array
    """
    pref, q = _pair_terms(xa, sa, xb, sb)
    return pref * matern_of_arg(2.0 * np.sqrt(nu * q), nu)


def ns_gauss_cross(xa, sa, xb, sb, symmetric=False):
    """Squared-exponential counterpart of :func:`ns_matern_cross`: ``pref * exp(-Q)``."""
    pref, q = _pair_terms(xa, sa, xb, sb)
    return pref * np.exp(-q)


def projection_alpha(xa, wa, xg, wg, phi1, phi2):
    """
    Projection-kernel weights of each site at each grid point.

    ``exp(-|s - h| / (phi1 + phi2 |proj|))`` where ``|proj|`` is the length
    of the mean wind of ``s`` and ``h`` projected on the line through them;
    weight 1 where ``s == h``.

    Returns
    -------
    (na, m) array
    """
    xa = np.asarray(xa, dtype=float)
    wa = np.asarray(wa, dtype=float)
    xg = np.asarray(xg, dtype=float)
    wg = np.asarray(wg, dtype=float)
    d0 = xa[:, None, 0] - xg[None, :, 0]
    d1 = xa[:, None, 1] - xg[None, :, 1]
    dist = np.hypot(d0, d1)
    r0 = 0.5 * (wa[:, None, 0] + wg[None, :, 0])
    r1 = 0.5 * (wa[:, None, 1] + wg[None, :, 1])
    same = dist == 0.0
    safe = np.where(same, 1.0, dist)
    pnorm = np.abs(r0 * d0 + r1 * d1) / safe
    out = np.exp(-dist / (phi1 + phi2 * pnorm))
    out[same] = 1.0
    return out
