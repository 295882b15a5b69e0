"""
Model identifiers, parameter containers and their flat (column) layout.

Covariance parameter blocks per model::

    M1  phi                              isotropic Matern
    M2  phi, theta, lambda1, lambda2     geometric anisotropic Matern
    M3  lambda1sq, lambda2sq             wind-rotated kernels (LGA)
    M4  phi1, phi2                       projection kernel, discretized
    M5  latent fields                    spectral-decomposition kernels
"""

from dataclasses import dataclass, field, replace

import numpy as np

from windgp.errors import ConfigError

__all__ = [
    "MODELS",
    "DELTA_NAMES",
    "LATENT_HYPER_NAMES",
    "GridSpec",
    "LatentFields",
    "ModelSpec",
    "ParameterState",
    "param_names",
    "state_to_vector",
    "vector_to_state",
]

MODELS = ("M1", "M2", "M3", "M4", "M5")

DELTA_NAMES = {
    "M1": ("phi",),
    "M2": ("phi", "theta", "lambda1", "lambda2"),
    "M3": ("lambda1sq", "lambda2sq"),
    "M4": ("phi1", "phi2"),
    "M5": (),
}

LATENT_HYPER_NAMES = (
    "mu_lam1", "mu_lam2", "sig2_lam", "phi_lam", "mu_gam", "sig2_gam", "phi_gam",
)


@dataclass(frozen=True)
class GridSpec:
    """Fixed grid for the discretized convolution, with a wind vector per point."""

    points: np.ndarray
    winds: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.atleast_2d(np.asarray(self.winds, dtype=float))
        if pts.shape[0] < 1 or pts.shape[1] != 2:
            raise ConfigError("grid must hold at least one 2-D point")
        if w.shape != pts.shape:
            raise ConfigError("grid needs one wind vector per point")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ConfigError("grid contains duplicate points")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "winds", w)

    @property
    def m(self):
        return self.points.shape[0]


@dataclass
class LatentFields:
    """Per-site latent values and GP hyperparameters for M5."""

    loglam1: np.ndarray
    loglam2: np.ndarray
    gamma: np.ndarray
    mu_lam1: float = 0.0
    mu_lam2: float = 0.0
    sig2_lam: float = 1.0
    phi_lam: float = 1.0
    mu_gam: float = 0.0
    sig2_gam: float = 1.0
    phi_gam: float = 1.0

    def __post_init__(self):
        self.loglam1 = np.asarray(self.loglam1, dtype=float).copy()
        self.loglam2 = np.asarray(self.loglam2, dtype=float).copy()
        self.gamma = np.asarray(self.gamma, dtype=float).copy()
        if not (len(self.loglam1) == len(self.loglam2) == len(self.gamma)):
            raise ConfigError("latent fields must all have one value per site")
        for name in ("sig2_lam", "phi_lam", "sig2_gam", "phi_gam"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")

    @property
    def n(self):
        return len(self.gamma)

    def hyper(self):
        return {k: float(getattr(self, k)) for k in LATENT_HYPER_NAMES}

    def copy(self):
        return replace(self, loglam1=self.loglam1.copy(), loglam2=self.loglam2.copy(),
                       gamma=self.gamma.copy())


@dataclass(frozen=True)
class ModelSpec:
    """Which model, its Matern smoothness, and (M4) the convolution grid.

    ``grid=None`` for M4 means the data sites themselves are the grid.
    """

    model: str
    nu: float = 1.0
    grid: GridSpec | None = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if not self.nu > 0:
            raise ConfigError("nu must be positive")

    @property
    def delta_names(self):
        return DELTA_NAMES[self.model]

    @property
    def needs_wind(self):
        return self.model in ("M3", "M4")


@dataclass
class ParameterState:
    """One value of (beta, tau2, eta, delta); sigma2 is derived as tau2 / eta."""

    beta: np.ndarray
    tau2: float
    eta: float
    delta: dict = field(default_factory=dict)
    latent: LatentFields | None = None

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        self.delta = {k: float(v) for k, v in self.delta.items()}

    @property
    def sigma2(self):
        return self.tau2 / self.eta

    def copy(self):
        return ParameterState(self.beta.copy(), self.tau2, self.eta, dict(self.delta),
                              None if self.latent is None else self.latent.copy())

    def check(self, spec):
        """Raise ConfigError if the delta block does not match ``spec``."""
        if set(self.delta) != set(spec.delta_names):
            raise ConfigError(
                f"{spec.model} expects parameters {spec.delta_names}, got {tuple(self.delta)}")
        if (spec.model == "M5") != (self.latent is not None):
            raise ConfigError("latent fields are required for M5 and only for M5")


def param_names(spec, p, site_ids=None):
    """Column names of the flat parameter vector for ``spec`` with ``p`` betas."""
    names = [f"beta_{k}" for k in range(p)] + ["tau2", "eta"]
    names += list(spec.delta_names)
    if spec.model == "M5":
        if site_ids is None:
            raise ConfigError("M5 needs site ids to name latent columns")
        names += list(LATENT_HYPER_NAMES)
        for prefix in ("loglam1", "loglam2", "gamma"):
            names += [f"{prefix}_{sid}" for sid in site_ids]
    return names


def state_to_vector(state, spec):
    parts = [state.beta, [state.tau2, state.eta], [state.delta[k] for k in spec.delta_names]]
    if spec.model == "M5":
        lat = state.latent
        parts += [[getattr(lat, k) for k in LATENT_HYPER_NAMES], lat.loglam1, lat.loglam2,
                  lat.gamma]
    return np.concatenate([np.asarray(x, dtype=float) for x in parts])


def vector_to_state(vec, spec, p, n_sites=None):
    vec = np.asarray(vec, dtype=float)
    beta = vec[:p]
    tau2, eta = vec[p], vec[p + 1]
    k = p + 2
    delta = {name: vec[k + i] for i, name in enumerate(spec.delta_names)}
    k += len(spec.delta_names)
    latent = None
    if spec.model == "M5":
        hyper = dict(zip(LATENT_HYPER_NAMES, vec[k:k + len(LATENT_HYPER_NAMES)]))
        k += len(LATENT_HYPER_NAMES)
        n = n_sites if n_sites is not None else (len(vec) - k) // 3
        latent = LatentFields(vec[k:k + n], vec[k + n:k + 2 * n], vec[k + 2 * n:k + 3 * n],
                              **hyper)
    return ParameterState(beta, tau2, eta, delta, latent)
