"""
Forward simulation and tabular visualization data: random fields at fixed
parameters, correlation maps around a reference site, and per-site kernel
ellipses.
"""

from dataclasses import dataclass, replace

import numpy as np

from windgp.covariance import build_covariance, m5_sigma_fields
from windgp.errors import ConfigError
from windgp.geometry import lga_kernels, normalize_winds
from windgp.linalg import cholesky
from windgp.models import GridSpec
from windgp.prediction import latent_at_targets

__all__ = [
    "SimulationRequest",
    "simulate_field",
    "correlation_map",
    "ellipse_field",
    "synthetic_wind",
]


@dataclass
class SimulationRequest:
    """
    Parameters for :func:`simulate_field`.

    ``design`` defaults to an intercept column. For M5 the state's latent
    fields must have one value per site.
    """

    spec: object
    state: object
    sites: np.ndarray
    winds: np.ndarray | None = None
    design: np.ndarray | None = None
    seed: int = 0
    n_realizations: int = 1

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        n = len(self.sites)
        if self.design is None:
            self.design = np.ones((n, 1))
        self.design = np.asarray(self.design, dtype=float).reshape(n, -1)
        if self.design.shape[1] != len(self.state.beta):
            raise ConfigError("design columns and beta length differ")
        if self.winds is not None:
            self.winds = normalize_winds(self.winds)
        if self.n_realizations < 1:
            raise ConfigError("need at least one realization")
        self.state.check(self.spec)


def _delta(state, spec):
    return state.latent if spec.model == "M5" else state.delta


def simulate_field(req):
    """
    Draws from ``N(Q beta, sigma2 Omega + tau2 I)`` at the request sites.

    Returns
    -------
    (n_sites, n_realizations) array
    """
    st = req.state
    cov = build_covariance(req.spec, _delta(st, req.spec), req.sites, req.winds, st.sigma2)
    cov[np.diag_indices_from(cov)] += st.tau2
    chol = cholesky(cov, state=st)
    rng = np.random.Generator(np.random.PCG64(req.seed))
    eps = rng.standard_normal((req.n_realizations, len(req.sites))).T
    return (req.design @ st.beta)[:, None] + chol @ eps


def correlation_map(spec, state, ref, points, winds=None, ref_wind=None, sites=None):
    """
    Correlation between a reference site and each of ``points``.

    Parameters
    ----------
    spec : ModelSpec
    state : ParameterState
    ref : (2,) array
    points : (m, 2) array
    winds, ref_wind : optional
        Winds at ``points`` and at ``ref`` (M3, M4).
    sites : (n, 2) array, optional
        M5 only: the sites where the state's latent fields live; values at
        ``ref`` and ``points`` are their GP conditional means.

    For M4 without an explicit grid the convolution grid is ``points``.

    Returns
    -------
    (m,) array in [-1, 1]
    """
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.model == "M5":
        if sites is None:
            raise ConfigError("M5 correlation maps need the sites of the latent fields")
        lat_ref = latent_at_targets(state.latent, sites, ref)
        lat_pts = latent_at_targets(state.latent, sites, points)
        row = build_covariance(spec, lat_ref, ref, sigma2=1.0, targets=points,
                               target_latent=lat_pts)
        return np.clip(row[0], -1.0, 1.0)
    if spec.needs_wind:
        if winds is None or ref_wind is None:
            raise ConfigError(f"{spec.model} needs winds at the reference and every point")
        winds = normalize_winds(winds)
        ref_wind = normalize_winds(ref_wind)
        if spec.model == "M4" and spec.grid is None:
            spec = replace(spec, grid=GridSpec(points, winds))
    row = build_covariance(spec, state.delta, ref, ref_wind, 1.0, targets=points,
                           target_winds=winds)
    return np.clip(row[0], -1.0, 1.0)


def ellipse_field(spec, state, sites, winds=None, scale=1.0):
    """
    One-standard-deviation ellipses of the per-site kernel matrices.

    Axis lengths are the square roots of the eigenvalues times ``scale``;
    orientation is the angle of the major axis in ``[0, pi)``, with circles
    reported as 0.

    Returns
    -------
    dict of arrays ``x``, ``y``, ``major``, ``minor``, ``orientation``
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if spec.model == "M3":
        if winds is None:
            raise ConfigError("M3 ellipses need winds")
        kern = lga_kernels(winds, state.delta["lambda1sq"], state.delta["lambda2sq"])
    elif spec.model == "M5":
        kern = m5_sigma_fields(state.latent, sites)
    else:
        raise ConfigError(f"{spec.model} has no per-site kernel matrices")
    vals, vecs = np.linalg.eigh(kern)
    major = vecs[:, :, 1]
    ang = np.mod(np.arctan2(major[:, 1], major[:, 0]), np.pi)
    # fold values that round to pi back to zero
    ang[np.isclose(ang, np.pi, rtol=0, atol=1e-12)] = 0.0
    circle = np.isclose(vals[:, 0], vals[:, 1], rtol=1e-10, atol=0)
    ang[circle] = 0.0
    return {
        "x": sites[:, 0],
        "y": sites[:, 1],
        "major": scale * np.sqrt(vals[:, 1]),
        "minor": scale * np.sqrt(vals[:, 0]),
        "orientation": ang,
    }


def synthetic_wind(coords, base_angle=0.0, turn=0.6, wavelength=None):
    """
    Smoothly turning unit wind field for synthetic studies.

    The direction is ``base_angle + turn * sin(2 pi x / L) * cos(2 pi y / L)``
    with ``L`` the larger side of the bounding box by default.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if wavelength is None:
        span = coords.max(axis=0) - coords.min(axis=0)
        wavelength = float(max(span.max(), 1e-12))
    k = 2 * np.pi / wavelength
    ang = base_angle + turn * np.sin(k * coords[:, 0]) * np.cos(k * coords[:, 1])
    return np.column_stack([np.cos(ang), np.sin(ang)])
