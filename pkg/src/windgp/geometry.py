"""
Planar geometry and 2x2 kernel-matrix primitives.

Sites are planar coordinates ``(x, y)``; wind vectors are ``(u, v)`` pairs
that the models use only through their direction, so they are normalized
to unit length on ingestion.
"""

import numpy as np

from windgp.errors import CoincidentSitesError, UndefinedWindError

__all__ = [
    "euclid_dist",
    "pairwise_distances",
    "normalize_wind",
    "normalize_winds",
    "wind_angle",
    "rotation",
    "lga_kernel",
    "lga_kernels",
    "mean_wind",
    "wind_projection",
]

# magnitude below which a wind vector carries no direction
WIND_EPS = 1e-12


def euclid_dist(a, b):
    """Euclidean distance between two sites."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.hypot(a[0] - b[0], a[1] - b[1]))


def pairwise_distances(xa, xb=None):
    """
    Distance matrix between two site sets.

    Parameters
    ----------
    xa : (n, 2) array
    xb : (m, 2) array, optional
        Defaults to ``xa``.

    Returns
    -------
    (n, m) array of distances
    """
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = xa if xb is None else np.atleast_2d(np.asarray(xb, dtype=float))
    dx = xa[:, None, 0] - xb[None, :, 0]
    dy = xa[:, None, 1] - xb[None, :, 1]
    return np.hypot(dx, dy)


def normalize_wind(w):
    """Return ``w`` scaled to unit length; zero vectors have no direction."""
    w = np.asarray(w, dtype=float)
    norm = np.hypot(w[0], w[1])
    if not np.isfinite(norm) or norm <= WIND_EPS:
        raise UndefinedWindError("undefined wind direction")
    return w / norm


def normalize_winds(w):
    """Row-wise version of :func:`normalize_wind` for an ``(n, 2)`` array."""
    w = np.atleast_2d(np.asarray(w, dtype=float))
    norm = np.hypot(w[:, 0], w[:, 1])
    bad = ~np.isfinite(norm) | (norm <= WIND_EPS)
    if np.any(bad):
        idx = np.flatnonzero(bad)
        raise UndefinedWindError(f"undefined wind direction at rows {idx.tolist()}")
    return w / norm[:, None]


def wind_angle(w):
    """
    Direction angle of a wind vector in ``(-pi, pi]``.

    Uses the two-argument arctangent. Kernel matrices built from the angle
    are invariant under ``w -> -w`` so the quadrant convention does not
    change any covariance.
    """
    w = np.asarray(w, dtype=float)
    if np.hypot(w[0], w[1]) <= WIND_EPS:
        raise UndefinedWindError("undefined wind direction")
    return float(np.arctan2(w[1], w[0]))


def rotation(omega):
    """Counter-clockwise rotation matrix ``[[cos, -sin], [sin, cos]]``."""
    c, s = np.cos(omega), np.sin(omega)
    return np.array([[c, -s], [s, c]])


def _rotated_diag(c, s, a, b):
    # R diag(a, b) R^T with R = [[c, -s], [s, c]], written out so it
    # vectorizes over arrays of angles
    return np.stack(
        [
            np.stack([a * c * c + b * s * s, (a - b) * c * s], axis=-1),
            np.stack([(a - b) * c * s, a * s * s + b * c * c], axis=-1),
        ],
        axis=-2,
    )


def lga_kernel(w, lam1sq, lam2sq):
    """
    Kernel matrix whose major axis follows the wind direction.

    ``R(omega) diag(lam1sq, lam2sq) R(omega)^T`` with ``omega`` the wind
    angle, so the eigenvector for ``lam1sq`` is the wind direction itself.
    """
    if lam1sq <= 0 or lam2sq <= 0:
        raise ValueError("kernel eigenvalues must be positive")
    # cos/sin of the wind angle are the unit components; using them directly
    # keeps the w -> -w invariance exact in floating point
    u, v = normalize_wind(w)
    return _rotated_diag(u, v, lam1sq, lam2sq)


def lga_kernels(winds, lam1sq, lam2sq):
    """Stack of :func:`lga_kernel` matrices, shape ``(n, 2, 2)``."""
    if lam1sq <= 0 or lam2sq <= 0:
        raise ValueError("kernel eigenvalues must be positive")
    winds = normalize_winds(winds)
    return _rotated_diag(winds[:, 0], winds[:, 1], float(lam1sq), float(lam2sq))


def mean_wind(w1, w2):
    """Componentwise average of two wind vectors."""
    return 0.5 * (np.asarray(w1, dtype=float) + np.asarray(w2, dtype=float))


def wind_projection(s, t, ws, wt):
    """
    Project the mean wind of two sites onto the line through them.

    Returns
    -------
    proj : (2,) array
        ``(<r, d> / <d, d>) d`` with ``r`` the mean wind and ``d = s - t``.
    norm : float
        ``|proj|``, which equals ``|<r, d>| / |d|``.
    """
    d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    dd = d @ d
    if dd == 0.0:
        raise CoincidentSitesError("coincident sites")
    r = mean_wind(ws, wt)
    proj = (r @ d) / dd * d
    return proj, float(abs(r @ d) / np.sqrt(dd))
