"""
Posterior predictive inference at unmonitored sites.

For each retained posterior draw the joint normal of observed and target
values is conditioned on the data; the Monte Carlo mixture over draws gives
the predictive distribution. Predictions target the observable response
(latent surface plus nugget) unless ``include_nugget=False``.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.optimize import minimize
from scipy.special import logsumexp

from windgp.covariance import build_covariance, exp_corr, sq_exp_corr
from windgp.errors import ConfigError, DataError, NumericalError
from windgp.geometry import normalize_winds, pairwise_distances
from windgp.inference import LATENT_JITTER, ObservationModel, invgamma_logpdf
from windgp.linalg import cholesky, chol_logdet
from windgp.models import GridSpec, LatentFields

__all__ = [
    "conditional_mvn",
    "PredictionRequest",
    "PredictiveSummary",
    "predict",
    "predictive_log_likelihood",
    "predictive_log_densities",
    "interp_wind",
    "WindFit",
    "fit_wind_component",
    "latent_at_targets",
]


def conditional_mvn(mu_a, mu_b, saa, sab, sbb, z):
    """
    Moments of ``B | A = z`` for a joint normal.

    Returns ``mu_b + Sab^T Saa^-1 (z - mu_a)`` and the symmetrized
    ``Sbb - Sab^T Saa^-1 Sab``, both via a Cholesky factor of ``Saa``.
    """
    saa = np.atleast_2d(np.asarray(saa, dtype=float))
    sab = np.asarray(sab, dtype=float).reshape(saa.shape[0], -1)
    sbb = np.atleast_2d(np.asarray(sbb, dtype=float))
    chol = cholesky(saa)
    w = linalg.solve_triangular(chol, sab, lower=True, check_finite=False)
    r = linalg.solve_triangular(chol, np.asarray(z, dtype=float) - mu_a, lower=True,
                                check_finite=False)
    mean = np.asarray(mu_b, dtype=float) + w.T @ r
    cov = sbb - w.T @ w
    return mean, 0.5 * (cov + cov.T)


@dataclass
class PredictionRequest:
    """
    What to predict and from which fit.

    ``target_design`` defaults to an intercept column. ``target_winds`` are
    required for M3 and M4 (see :func:`interp_wind`).
    """

    targets: np.ndarray
    samples: object
    data: ObservationModel
    target_winds: np.ndarray | None = None
    target_design: np.ndarray | None = None
    draws_per_sample: int = 1
    include_nugget: bool = True
    level: float = 0.95
    seed: int = 0
    keep_draws: bool = False

    def __post_init__(self):
        self.targets = np.atleast_2d(np.asarray(self.targets, dtype=float))
        q = len(self.targets)
        if q < 1 or self.targets.shape[1] != 2:
            raise ConfigError("need at least one (x, y) target site")
        if self.target_design is None:
            self.target_design = np.ones((q, 1))
        self.target_design = np.asarray(self.target_design, dtype=float).reshape(q, -1)
        if self.target_design.shape[1] != self.data.p:
            raise ConfigError("target design has a different number of covariates")
        if self.target_winds is not None:
            self.target_winds = normalize_winds(self.target_winds)
        if self.draws_per_sample < 1:
            raise ConfigError("draws_per_sample must be at least 1")
        if len(self.samples) == 0:
            raise ConfigError("no posterior samples")


@dataclass
class PredictiveSummary:
    """Per-target predictive mean, sd and equal-tailed interval."""

    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    include_nugget: bool
    draws: np.ndarray | None = None
    meta: dict = field(default_factory=dict)


def _grid_spec(spec, data):
    # an M4 grid left as "the data sites" must stay the data sites when
    # target blocks are built
    if spec.model == "M4" and spec.grid is None:
        return replace(spec, grid=GridSpec(data.coords, data.winds))
    return spec


def latent_at_targets(latent, sites, targets):
    """
    M5 latent fields at new sites, set to their GP conditional means given
    the values at the data sites.
    """
    d_ss = pairwise_distances(sites)
    d_ts = pairwise_distances(targets, sites)
    out = {}
    for names, phi in ((("loglam1", "mu_lam1"), latent.phi_lam),
                       (("loglam2", "mu_lam2"), latent.phi_lam),
                       (("gamma", "mu_gam"), latent.phi_gam)):
        g = sq_exp_corr(d_ss, phi)
        g[np.diag_indices_from(g)] += LATENT_JITTER
        chol = cholesky(g, scale=1.0)
        mu = getattr(latent, names[1])
        wts = linalg.cho_solve((chol, True), getattr(latent, names[0]) - mu, check_finite=False)
        out[names[0]] = mu + sq_exp_corr(d_ts, phi) @ wts
    return LatentFields(out["loglam1"], out["loglam2"], out["gamma"], **latent.hyper())


def _blocks(spec, state, data, targets, target_winds, joint):
    """Covariance blocks (observed, cross, target) for one parameter state."""
    s2 = state.sigma2
    if spec.model == "M5":
        delta = state.latent
        tlat = latent_at_targets(state.latent, data.coords, targets)
        saa = build_covariance(spec, delta, data.coords, sigma2=s2)
        sab = build_covariance(spec, delta, data.coords, sigma2=s2, targets=targets,
                               target_latent=tlat)
        sbb = build_covariance(spec, tlat, targets, sigma2=s2) if joint else None
    else:
        saa = build_covariance(spec, state.delta, data.coords, data.winds, s2)
        sab = build_covariance(spec, state.delta, data.coords, data.winds, s2,
                               targets=targets, target_winds=target_winds)
        sbb = (build_covariance(spec, state.delta, targets, target_winds, s2)
               if joint else None)
    saa[np.diag_indices_from(saa)] += state.tau2
    return saa, sab, sbb


def _check_winds(spec, data, target_winds, q):
    if spec.needs_wind:
        if data.winds is None:
            raise ConfigError(f"{spec.model} needs winds at the data sites")
        if target_winds is None:
            raise ConfigError(
                f"{spec.model} needs wind vectors at the targets; interpolate them first "
                "(interp_wind or the wind-interp command)")
        if len(target_winds) != q:
            raise ConfigError("need one wind vector per target")


def _marginal_moments(spec, state, data, targets, target_winds, target_design, nugget):
    saa, sab, _ = _blocks(spec, state, data, targets, target_winds, joint=False)
    chol = cholesky(saa, state=state)
    w = linalg.solve_triangular(chol, sab, lower=True, check_finite=False)
    r = linalg.solve_triangular(chol, data.z - data.design @ state.beta, lower=True,
                                check_finite=False)
    mean = target_design @ state.beta + w.T @ r
    # every correlation model has unit diagonal
    var = state.sigma2 - np.einsum("ij,ij->j", w, w)
    var = np.maximum(var, 0.0)
    if nugget:
        var = var + state.tau2
    return mean, var


def predict(request, spec):
    """
    Monte Carlo posterior predictive summaries at the target sites.

    For each retained draw the exact conditional mean and variance at each
    target are computed; the reported mean and sd are the exact moments of
    the resulting normal mixture and the interval comes from
    ``draws_per_sample`` marginal draws per posterior sample.

    Returns
    -------
    PredictiveSummary
    """
    req = request
    data = req.data
    q = len(req.targets)
    _check_winds(spec, data, req.target_winds, q)
    spec = _grid_spec(spec, data)
    samples = req.samples
    n_s = len(samples)
    means = np.empty((n_s, q))
    vars_ = np.empty((n_s, q))
    for i, state in enumerate(samples.states()):
        means[i], vars_[i] = _marginal_moments(spec, state, data, req.targets, req.target_winds,
                                               req.target_design, req.include_nugget)
    rng = np.random.Generator(np.random.PCG64(req.seed))
    eps = rng.standard_normal((n_s, req.draws_per_sample, q))
    draws = (means[:, None, :] + np.sqrt(vars_)[:, None, :] * eps).reshape(-1, q)
    mean = means.mean(axis=0)
    var = vars_.mean(axis=0) + means.var(axis=0)
    lo = 0.5 * (1.0 - req.level)
    lower, upper = np.quantile(draws, [lo, 1.0 - lo], axis=0)
    return PredictiveSummary(
        mean=mean, sd=np.sqrt(var), lower=lower, upper=upper, level=req.level,
        include_nugget=req.include_nugget, draws=draws if req.keep_draws else None,
        meta={"n_samples": n_s, "draws_per_sample": req.draws_per_sample,
              "include_nugget": req.include_nugget, "seed": req.seed})


def predictive_log_densities(zstar, samples, data, spec, targets, target_winds=None,
                             target_design=None):
    """Joint conditional log density of ``zstar`` under each retained draw."""
    zstar = np.asarray(zstar, dtype=float).ravel()
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    q = len(targets)
    if len(zstar) != q:
        raise DataError("one held-out value per target is required")
    if target_winds is not None:
        target_winds = normalize_winds(target_winds)
    _check_winds(spec, data, target_winds, q)
    if target_design is None:
        target_design = np.ones((q, 1))
    target_design = np.asarray(target_design, dtype=float).reshape(q, -1)
    spec = _grid_spec(spec, data)
    out = np.empty(len(samples))
    for i, state in enumerate(samples.states()):
        saa, sab, sbb = _blocks(spec, state, data, targets, target_winds, joint=True)
        sbb[np.diag_indices_from(sbb)] += state.tau2
        mean, cov = conditional_mvn(data.design @ state.beta, target_design @ state.beta,
                                    saa, sab, sbb, data.z)
        chol = cholesky(cov, state=state)
        r = linalg.solve_triangular(chol, zstar - mean, lower=True, check_finite=False)
        out[i] = -0.5 * (q * math.log(2 * math.pi) + chol_logdet(chol) + float(r @ r))
    return out


def predictive_log_likelihood(zstar, samples, data, spec, targets, target_winds=None,
                              target_design=None):
    """
    ``log((1/L) sum_l p(zstar | z, theta_l))`` over the ``L`` retained draws,
    with the held-out values treated jointly and nugget included.
    """
    dens = predictive_log_densities(zstar, samples, data, spec, targets, target_winds,
                                    target_design)
    return float(logsumexp(dens) - math.log(len(dens)))


# --------------------------------------------------------------------------
# wind interpolation


@dataclass
class WindFit:
    """MAP hyperparameters of one wind-component GP, with the exponential
    correlation ``exp(-d / phi)`` and no nugget."""

    mu: float
    sigma2: float
    phi: float
    coords: np.ndarray
    values: np.ndarray

    def predict(self, targets):
        d = pairwise_distances(self.coords)
        chol = cholesky(exp_corr(d, self.phi), scale=1.0)
        wts = linalg.cho_solve((chol, True), self.values - self.mu, check_finite=False)
        return self.mu + exp_corr(pairwise_distances(targets, self.coords), self.phi) @ wts


def _profile_mu(chol, y, mu_var, sigma2):
    one = np.ones(len(y))
    a = linalg.cho_solve((chol, True), one, check_finite=False)
    prec = float(one @ a) / sigma2 + 1.0 / mu_var
    return float(a @ y) / sigma2 / prec


def fit_wind_component(coords, values, priors=((0.1, 0.1), None), mu_var=1e6):
    """
    MAP fit of ``(mu, sigma2, phi)`` for one wind component.

    ``sigma2`` has an IG(0.1, 0.1) prior; ``phi`` an IG(2, b) prior whose mean
    puts the practical range (``phi * log 20``) at half the maximum
    inter-site distance; ``mu`` a N(0, ``mu_var``) prior, maximized exactly
    for each ``(sigma2, phi)``.
    """
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    y = np.asarray(values, dtype=float)
    n = len(y)
    if n < 3:
        raise DataError("wind interpolation needs at least 3 sites")
    d = pairwise_distances(coords)
    sig_prior = priors[0]
    phi_prior = priors[1] or (2.0, 0.5 * d.max() / math.log(20.0))

    def negpost(p):
        s2, phi = math.exp(p[0]), math.exp(p[1])
        try:
            chol = cholesky(exp_corr(d, phi), scale=1.0)
        except NumericalError:
            return 1e300
        mu = _profile_mu(chol, y, mu_var, s2)
        r = linalg.solve_triangular(chol, y - mu, lower=True, check_finite=False)
        ll = -0.5 * (n * math.log(s2) + chol_logdet(chol) + float(r @ r) / s2)
        lp = (invgamma_logpdf(s2, *sig_prior) + invgamma_logpdf(phi, *phi_prior)
              - 0.5 * mu * mu / mu_var)
        return -(ll + lp)

    start = [math.log(max(float(np.var(y)), 1e-3)), math.log(phi_prior[1])]
    res = minimize(negpost, start, method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
    s2, phi = math.exp(res.x[0]), math.exp(res.x[1])
    chol = cholesky(exp_corr(d, phi), scale=1.0)
    return WindFit(_profile_mu(chol, y, mu_var, s2), s2, phi, coords, y)


def interp_wind(coords, winds, targets, return_fits=False):
    """
    Wind directions at new sites from independent GPs on the ``u`` and
    ``v`` components.

    The conditional means are renormalized to unit length. A mean vector
    shorter than 1e-8 carries no usable direction and raises ``DataError``.
    """
    winds = normalize_winds(winds)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    fu = fit_wind_component(coords, winds[:, 0])
    fv = fit_wind_component(coords, winds[:, 1])
    raw = np.column_stack([fu.predict(targets), fv.predict(targets)])
    norm = np.hypot(raw[:, 0], raw[:, 1])
    bad = np.flatnonzero(norm < 1e-8)
    if len(bad):
        raise DataError(f"ambiguous interpolated direction at targets {bad.tolist()}")
    out = raw / norm[:, None]
    return (out, (fu, fv)) if return_fits else out
