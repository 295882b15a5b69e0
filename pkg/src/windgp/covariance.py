"""
Covariance matrices for models M1-M5.

All builders return ``sigma2`` times a correlation matrix; the sampler calls
them with ``sigma2=1`` to get the correlation ``Omega``. Builders take an
optional second site set (``targets``) and then return the cross block
between the data sites and the targets instead of the square matrix.
"""

import math

import numpy as np
from scipy import special
from scipy.stats import norm

from windgp import kernels
from windgp.errors import ConfigError
from windgp.geometry import lga_kernels, normalize_winds, pairwise_distances, wind_projection
from windgp.models import GridSpec, LatentFields, ModelSpec

__all__ = [
    "bessel_k",
    "matern_corr",
    "sq_exp_corr",
    "exp_corr",
    "cov_m1",
    "cov_m2",
    "m2_metric",
    "ns_quad_q",
    "cov_ns_matern",
    "cov_ns_gaussian",
    "cov_m3",
    "alpha",
    "alpha_matrix",
    "cov_m4",
    "m5_angles",
    "m5_sigma_fields",
    "build_covariance",
]


def bessel_k(nu, x):
    """Modified Bessel function of the second kind, ``K_nu(x)`` for ``x > 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("bessel_k is defined for x > 0 only")
    out = special.kv(nu, x)
    return float(out) if out.ndim == 0 else out


def matern_corr(t, nu=1.0):
    r"""
    Matern correlation in scaled distance ``t``.

    .. math:: \rho(t) = \frac{t^\nu K_\nu(t)}{2^{\nu-1}\Gamma(\nu)}, \quad \rho(0) = 1
    """
    t = np.asarray(t, dtype=float)
    out = kernels.matern_of_arg(t, float(nu))
    return float(out) if out.ndim == 0 else out


def sq_exp_corr(d, phi):
    """``exp(-(d / phi)**2)``."""
    return np.exp(-(np.asarray(d, dtype=float) / phi) ** 2)


def exp_corr(d, phi):
    """``exp(-d / phi)``; reaches 0.05 at ``d = phi * log(20)``."""
    return np.exp(-np.asarray(d, dtype=float) / phi)


def cov_m1(sites, sigma2, phi, nu=1.0, targets=None):
    """Isotropic Matern covariance, ``sigma2 * rho(|si - sj| / phi)``."""
    d = pairwise_distances(sites, targets)
    return sigma2 * matern_corr(d / phi, nu)


def m2_metric(theta, lam1, lam2):
    """``R(theta) diag(lam1, lam2) R(theta)^T``, the quadratic form used by M2."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[lam1 * c * c + lam2 * s * s, (lam1 - lam2) * c * s],
                     [(lam1 - lam2) * c * s, lam1 * s * s + lam2 * c * c]])


def cov_m2(sites, sigma2, phi, nu, theta, lam1, lam2, targets=None):
    """
    Geometric anisotropic Matern covariance.

    The scaled distance of a lag ``u`` is ``sqrt(u^T A u) / phi`` with
    ``A = m2_metric(theta, lam1, lam2)``; with ``lam1 == lam2 == 1`` this
    is exactly :func:`cov_m1`.
    """
    xa = np.atleast_2d(np.asarray(sites, dtype=float))
    xb = xa if targets is None else np.atleast_2d(np.asarray(targets, dtype=float))
    a = m2_metric(theta, lam1, lam2)
    d0 = xa[:, None, 0] - xb[None, :, 0]
    d1 = xa[:, None, 1] - xb[None, :, 1]
    quad = a[0, 0] * d0 * d0 + 2.0 * a[0, 1] * d0 * d1 + a[1, 1] * d1 * d1
    return sigma2 * matern_corr(np.sqrt(np.maximum(quad, 0.0)) / phi, nu)


def ns_quad_q(si, sj, sigma_i, sigma_j):
    """``(si - sj)^T ((Sigma_i + Sigma_j) / 2)^{-1} (si - sj)``."""
    u = np.asarray(si, dtype=float) - np.asarray(sj, dtype=float)
    avg = 0.5 * (np.asarray(sigma_i, dtype=float) + np.asarray(sigma_j, dtype=float))
    return float(u @ np.linalg.solve(avg, u))


def _check_spd(sigmas):
    sigmas = np.asarray(sigmas, dtype=float)
    if sigmas.ndim != 3 or sigmas.shape[1:] != (2, 2):
        raise ValueError("kernel matrices must have shape (n, 2, 2)")
    a, b, c, d = sigmas[:, 0, 0], sigmas[:, 0, 1], sigmas[:, 1, 0], sigmas[:, 1, 1]
    if not np.allclose(b, c, rtol=1e-12, atol=1e-14 * np.abs(a + d).max()):
        raise ValueError("kernel matrices must be symmetric")
    if np.any(a <= 0) or np.any(a * d - b * c <= 0):
        raise ValueError("kernel matrices must be positive definite")
    return sigmas


def cov_ns_matern(sites, sigmas, sigma2, nu=1.0, targets=None, target_sigmas=None):
    """
    Nonstationary Matern covariance from per-site kernel matrices.

    ``sigma2 |S_i|^(1/4) |S_j|^(1/4) |(S_i + S_j)/2|^(-1/2) rho(2 sqrt(nu Q_ij))``
    with ``rho`` the Matern correlation; the diagonal is exactly ``sigma2``.
    """
    xa = np.atleast_2d(np.asarray(sites, dtype=float))
    sa = _check_spd(sigmas)
    if targets is None:
        return sigma2 * kernels.ns_matern_cross(xa, sa, xa, sa, float(nu), True)
    xb = np.atleast_2d(np.asarray(targets, dtype=float))
    sb = _check_spd(target_sigmas)
    return sigma2 * kernels.ns_matern_cross(xa, sa, xb, sb, float(nu), False)


def cov_ns_gaussian(sites, sigmas, sigma2, targets=None, target_sigmas=None):
    """
    Squared-exponential member of the same family: ``pref * exp(-Q_ij)``.

    Equals the normalized overlap integral of Gaussian kernels centred at
    the sites with covariances ``Sigma_i / 4``; also the ``nu -> inf`` limit
    of :func:`cov_ns_matern`.
    """
    xa = np.atleast_2d(np.asarray(sites, dtype=float))
    sa = _check_spd(sigmas)
    if targets is None:
        return sigma2 * kernels.ns_gauss_cross(xa, sa, xa, sa, True)
    xb = np.atleast_2d(np.asarray(targets, dtype=float))
    return sigma2 * kernels.ns_gauss_cross(xa, sa, xb, _check_spd(target_sigmas), False)


def cov_m3(sites, winds, sigma2, nu, lam1sq, lam2sq, targets=None, target_winds=None):
    """Nonstationary Matern with each site's kernel ellipse aligned to its wind."""
    sa = lga_kernels(winds, lam1sq, lam2sq)
    if targets is None:
        return cov_ns_matern(sites, sa, sigma2, nu)
    if target_winds is None:
        raise ConfigError("M3 needs wind vectors at the target sites")
    sb = lga_kernels(target_winds, lam1sq, lam2sq)
    return cov_ns_matern(sites, sa, sigma2, nu, targets, sb)


def alpha(s, h, ws, wh, phi1, phi2):
    """Projection-kernel weight of site ``s`` at grid point ``h``."""
    s = np.asarray(s, dtype=float)
    h = np.asarray(h, dtype=float)
    if np.array_equal(s, h):
        return 1.0
    _, pnorm = wind_projection(s, h, ws, wh)
    return math.exp(-math.hypot(*(s - h)) / (phi1 + phi2 * pnorm))


def alpha_matrix(sites, winds, grid, phi1, phi2):
    """Weights of every site at every grid point, shape ``(n, m)``."""
    return kernels.projection_alpha(np.atleast_2d(np.asarray(sites, dtype=float)),
                                    np.atleast_2d(np.asarray(winds, dtype=float)),
                                    grid.points, grid.winds, float(phi1), float(phi2))


def _unit_rows(a):
    return a / np.sqrt(np.einsum("ij,ij->i", a, a))[:, None]


def cov_m4(sites, winds, grid, sigma2, phi1, phi2, targets=None, target_winds=None):
    """
    Discretized projection-kernel covariance.

    ``sigma2 * <a_i, a_j> / (|a_i| |a_j|)`` where ``a_i`` is the weight
    vector of site ``i`` over the grid: a normalized Gram matrix, so it is
    PSD with diagonal exactly ``sigma2``. ``grid=None`` uses the sites.
    """
    if grid is None:
        grid = GridSpec(sites, winds)
    if phi1 <= 0 or phi2 < 0:
        raise ValueError("phi1 must be positive and phi2 nonnegative")
    a = _unit_rows(alpha_matrix(sites, winds, grid, phi1, phi2))
    if targets is None:
        out = a @ a.T
        np.fill_diagonal(out, 1.0)
        return sigma2 * out
    if target_winds is None:
        raise ConfigError("M4 needs wind vectors at the target sites")
    b = _unit_rows(alpha_matrix(targets, target_winds, grid, phi1, phi2))
    return sigma2 * (a @ b.T)


def m5_angles(gamma):
    """Rotation angles ``(pi/2) Phi(gamma)`` in ``[0, pi/2]``."""
    return 0.5 * np.pi * norm.cdf(np.asarray(gamma, dtype=float))


def m5_sigma_fields(latent, sites=None):
    """
    Per-site kernel matrices ``R(theta) diag(lam1, lam2) R(theta)^T``.

    ``lam_j = exp(loglam_j)`` and ``theta = (pi/2) Phi(gamma)``; the major
    axis (eigenvector of ``lam1``) points at angle ``theta``.
    """
    if sites is not None and len(np.atleast_2d(sites)) != latent.n:
        raise ConfigError("latent fields and sites differ in length")
    theta = m5_angles(latent.gamma)
    c, s = np.cos(theta), np.sin(theta)
    l1, l2 = np.exp(latent.loglam1), np.exp(latent.loglam2)
    out = np.empty((latent.n, 2, 2))
    out[:, 0, 0] = l1 * c * c + l2 * s * s
    out[:, 0, 1] = out[:, 1, 0] = (l1 - l2) * c * s
    out[:, 1, 1] = l1 * s * s + l2 * c * c
    return out


def build_covariance(spec, delta, sites, winds=None, sigma2=1.0, targets=None,
                     target_winds=None, target_latent=None):
    """
    Dispatch to the builder for ``spec.model``.

    Parameters
    ----------
    spec : ModelSpec
    delta : dict or LatentFields
        Covariance parameters; for M5 a :class:`LatentFields` (or a dict
        holding one under ``"latent"``).
    sites : (n, 2) array
    winds : (n, 2) array, optional
        Unit winds at the sites (M3, M4).
    sigma2 : float
    targets, target_winds, target_latent : optional
        When ``targets`` is given the ``(n, q)`` cross block is returned.
        ``target_latent`` holds M5 latent values at the targets.
    """
    if not isinstance(spec, ModelSpec):
        raise ConfigError("spec must be a ModelSpec")
    model = spec.model
    if model == "M5":
        latent = delta.get("latent") if isinstance(delta, dict) else delta
        if not isinstance(latent, LatentFields):
            raise ConfigError("M5 needs LatentFields as its covariance parameters")
        sa = m5_sigma_fields(latent, sites)
        if targets is None:
            return cov_ns_matern(sites, sa, sigma2, spec.nu)
        if target_latent is None:
            raise ConfigError("M5 needs latent values at the target sites")
        return cov_ns_matern(sites, sa, sigma2, spec.nu, targets,
                             m5_sigma_fields(target_latent, targets))

    names = spec.delta_names
    if not isinstance(delta, dict) or set(delta) != set(names):
        got = tuple(delta) if isinstance(delta, dict) else type(delta).__name__
        raise ConfigError(f"{model} expects parameters {names}, got {got}")
    if spec.needs_wind:
        if winds is None:
            raise ConfigError(f"{model} needs wind vectors at the sites")
        winds = normalize_winds(winds)
        if target_winds is not None:
            target_winds = normalize_winds(target_winds)
    d = delta
    if model == "M1":
        return cov_m1(sites, sigma2, d["phi"], spec.nu, targets)
    if model == "M2":
        return cov_m2(sites, sigma2, d["phi"], spec.nu, d["theta"], d["lambda1"],
                      d["lambda2"], targets)
    if model == "M3":
        return cov_m3(sites, winds, sigma2, spec.nu, d["lambda1sq"], d["lambda2sq"],
                      targets, target_winds)
    return cov_m4(sites, winds, spec.grid, sigma2, d["phi1"], d["phi2"], targets,
                  target_winds)
