"""
Model comparison: DIC, posterior predictive loss, MSE and predictive
log-likelihood, collected into one row per fitted model.
"""

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import linalg

from windgp.errors import DataError
from windgp.inference import log_likelihood
from windgp.linalg import cholesky
from windgp.prediction import PredictionRequest, predict, predictive_log_likelihood

__all__ = [
    "dic",
    "ppl",
    "mse",
    "deviance_draws",
    "deviance_at_mean",
    "posterior_mean_state",
    "replicate_moments",
    "CriterionRow",
    "CriterionReport",
    "evaluate",
    "TABLE_COLUMNS",
]

TABLE_COLUMNS = ("model", "G", "P", "D", "Dbar", "pD", "DIC", "PLL", "MSE")


def dic(deviances, deviance_at_mean):
    """
    Deviance information criterion.

    Returns ``(Dbar, pD, DIC)`` with ``pD = Dbar - D(theta_bar)`` and
    ``DIC = Dbar + pD``. A negative ``pD`` is returned as is.
    """
    d = np.asarray(deviances, dtype=float).ravel()
    if d.size == 0:
        raise DataError("no deviance draws")
    dbar = float(d.mean())
    pd = dbar - float(deviance_at_mean)
    return dbar, pd, dbar + pd


def ppl(mu, var, z, k=1.0):
    """
    Posterior predictive loss ``D_k = k / (k + 1) G + P``.

    ``G`` is the sum of squared differences between replicate means ``mu``
    and observations ``z``; ``P`` the sum of replicate variances ``var``.

    Returns ``(G, P, D_k)``.
    """
    mu = np.asarray(mu, dtype=float).ravel()
    var = np.asarray(var, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if not (len(mu) == len(var) == len(z)):
        raise DataError("means, variances and observations differ in length")
    if not k > 0:
        raise DataError("k must be positive")
    g = float(np.sum((mu - z) ** 2))
    p = float(np.sum(var))
    return g, p, k / (k + 1.0) * g + p


def mse(fitted, observed):
    """Mean squared difference between fitted values and observations."""
    f = np.asarray(fitted, dtype=float).ravel()
    o = np.asarray(observed, dtype=float).ravel()
    if f.size == 0:
        raise DataError("empty input")
    if f.shape != o.shape:
        raise DataError("fitted and observed differ in length")
    return float(np.mean((f - o) ** 2))


def _correlation(spec, state, data):
    return data.correlation(spec, state)


def deviance_draws(samples, data, spec):
    """``-2 log p(z | theta)`` at every retained draw."""
    out = np.empty(len(samples))
    for i, state in enumerate(samples.states()):
        out[i] = -2.0 * log_likelihood(data, state, _correlation(spec, state, data))
    return out


def posterior_mean_state(samples):
    """
    Posterior mean state for the plug-in deviance.

    Every parameter is averaged on its own scale except that the two
    variances ``sigma2`` and ``tau2`` are averaged and ``eta`` is their
    ratio. The variance ratio itself has a heavy right tail under its
    default prior, so its raw mean can sit far from the bulk of the draws.
    """
    state = samples.mean_state()
    sigma2 = float(np.mean(samples.column("tau2") / samples.column("eta")))
    state.eta = state.tau2 / sigma2
    return state


def deviance_at_mean(samples, data, spec):
    """Deviance at :func:`posterior_mean_state`."""
    state = posterior_mean_state(samples)
    return -2.0 * log_likelihood(data, state, _correlation(spec, state, data))


def replicate_moments(samples, data, spec):
    """
    Mean and variance at each site of replicate data from the posterior.

    A replicate at draw ``l`` is ``Q beta + Y + eps`` with ``Y`` from its
    conditional given ``z`` and ``theta_l``. The moments are computed exactly
    per draw and combined across draws with the law of total variance, so
    no Monte Carlo replicate noise is added.
    """
    n = data.n
    means = np.empty((len(samples), n))
    vars_ = np.empty((len(samples), n))
    for i, state in enumerate(samples.states()):
        c = state.sigma2 * _correlation(spec, state, data)
        saa = c.copy()
        saa[np.diag_indices_from(saa)] += state.tau2
        chol = cholesky(saa, state=state)
        mu = data.design @ state.beta
        w = linalg.solve_triangular(chol, c, lower=True, check_finite=False)
        r = linalg.solve_triangular(chol, data.z - mu, lower=True, check_finite=False)
        means[i] = mu + w.T @ r
        vars_[i] = np.maximum(np.diag(c) - np.einsum("ij,ij->j", w, w), 0.0) + state.tau2
    return means.mean(axis=0), vars_.mean(axis=0) + means.var(axis=0)


@dataclass
class CriterionRow:
    model: str
    G: float
    P: float
    D: float
    Dbar: float
    pD: float
    DIC: float
    PLL: float = math.nan
    MSE: float = math.nan
    k: float = 1.0

    def check(self):
        """``D`` must be reproducible from ``G``, ``P`` and ``k``."""
        return math.isclose(self.D, self.k / (self.k + 1) * self.G + self.P, rel_tol=1e-12,
                            abs_tol=1e-9)


@dataclass
class CriterionReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, row):
        self.rows.append(row)

    def as_dicts(self):
        return [{c: asdict(r)[c] for c in TABLE_COLUMNS} for r in self.rows]

    def best(self, criterion):
        """Model name minimizing ``criterion`` (maximizing for ``PLL``)."""
        vals = [getattr(r, criterion) for r in self.rows]
        idx = int(np.nanargmax(vals) if criterion == "PLL" else np.nanargmin(vals))
        return self.rows[idx].model


def evaluate(samples, data, spec, k=1.0, heldout=None, seed=0):
    """
    All comparison criteria for one fitted model.

    Parameters
    ----------
    samples : PosteriorSamples
    data : ObservationModel
        The fitted data.
    spec : ModelSpec
    k : float
        Weight of the goodness-of-fit term in ``D_k``.
    heldout : ObservationModel, optional
        Held-out sites. When given, ``PLL`` is their joint predictive
        log-likelihood and ``MSE`` compares their predictive means with the
        held-out values; otherwise ``MSE`` uses the replicate means at the
        fitted sites.

    Returns
    -------
    CriterionRow
    """
    mu, var = replicate_moments(samples, data, spec)
    g, p, dk = ppl(mu, var, data.z, k)
    dbar, pd, d_ic = dic(deviance_draws(samples, data, spec), deviance_at_mean(samples, data,
                                                                               spec))
    pll = math.nan
    err = mse(mu, data.z)
    if heldout is not None:
        pll = predictive_log_likelihood(heldout.z, samples, data, spec, heldout.coords,
                                        heldout.winds, heldout.design)
        req = PredictionRequest(heldout.coords, samples, data, heldout.winds, heldout.design,
                                seed=seed)
        err = mse(predict(req, spec).mean, heldout.z)
    return CriterionRow(spec.model, g, p, dk, dbar, pd, d_ic, pll, err, k)
