"""
Likelihood, priors and the Gibbs / Metropolis-Hastings sampler.

The observation model is ``z = Q beta + Y + eps`` with ``Y`` a zero-mean GP
of covariance ``sigma2 * Omega(delta)`` and ``eps`` iid ``N(0, tau2)``.
Writing ``eta = tau2 / sigma2`` the marginal covariance is
``Sigma = tau2 * (I + Omega / eta)``; the sampler works on
``(beta, tau2, eta, delta)``.

Update scheme per iteration:

* ``beta`` -- conjugate normal draw (Gibbs);
* ``tau2`` -- conjugate inverse-gamma draw given ``eta`` and ``delta``;
* ``eta`` and the covariance block ``delta`` -- one joint random-walk
  Metropolis block on the log scale (``theta`` of M2 on the logit scale),
  whose proposal covariance is learned during burn-in;
* M5 only -- each latent value at each site by its own random walk, the
  latent means and variances by conjugate draws, and the latent decay
  parameters by log-scale random walks.

Proposal scales adapt only during burn-in and are frozen afterwards, so
the retained draws come from a fixed Markov kernel.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, special
from scipy.optimize import brentq

from windgp.covariance import build_covariance, m5_sigma_fields, matern_corr, sq_exp_corr
from windgp.errors import ConfigError, NumericalError
from windgp.geometry import normalize_winds, pairwise_distances
from windgp.linalg import cholesky, chol_logdet
from windgp import kernels
from windgp.models import (
    LatentFields,
    ModelSpec,
    ParameterState,
    param_names,
    state_to_vector,
    vector_to_state,
)

logger = logging.getLogger(__name__)

__all__ = [
    "ObservationModel",
    "PriorSpec",
    "ChainConfig",
    "PosteriorSamples",
    "invgamma_logpdf",
    "log_likelihood",
    "log_prior",
    "gibbs_beta",
    "mh_block_update",
    "initial_state",
    "run_chain",
    "LATENT_JITTER",
]

# fixed relative nugget on the squared-exponential Gram matrices of the M5
# latent fields; those matrices are numerically singular without it
LATENT_JITTER = 1e-6
TARGET_ACCEPT = 0.35
HALF_PI = 0.5 * math.pi


@dataclass
class ObservationModel:
    """Data for one fit: coordinates, response, design matrix and winds."""

    coords: np.ndarray
    z: np.ndarray
    design: np.ndarray | None = None
    winds: np.ndarray | None = None
    site_ids: list | None = None

    def __post_init__(self):
        self.coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        self.z = np.asarray(self.z, dtype=float).ravel()
        n = len(self.z)
        if self.design is None:
            self.design = np.ones((n, 1))
        self.design = np.asarray(self.design, dtype=float).reshape(n, -1)
        if self.coords.shape != (n, 2):
            raise ConfigError("coordinates must be (n, 2) with one row per response")
        if np.linalg.matrix_rank(self.design) < self.design.shape[1]:
            raise ConfigError("design matrix is not of full column rank")
        if self.winds is not None:
            self.winds = normalize_winds(self.winds)
            if self.winds.shape != (n, 2):
                raise ConfigError("need one wind vector per site")
        if self.site_ids is None:
            self.site_ids = [str(i) for i in range(n)]
        self.site_ids = [str(s) for s in self.site_ids]

    @property
    def n(self):
        return len(self.z)

    @property
    def p(self):
        return self.design.shape[1]

    @property
    def max_distance(self):
        return float(pairwise_distances(self.coords).max())

    def correlation(self, spec, state):
        """Unit-variance covariance ``Omega(delta)`` of the latent process."""
        delta = state.latent if spec.model == "M5" else state.delta
        return build_covariance(spec, delta, self.coords, self.winds, 1.0)


def practical_range_arg(nu):
    """Scaled distance at which the Matern correlation falls to 0.05."""
    return brentq(lambda t: matern_corr(t, nu) - 0.05, 1e-8, 100.0)


@dataclass
class PriorSpec:
    """
    Prior hyperparameters; every ``(a, b)`` pair is an inverse gamma with
    shape ``a`` and scale ``b``.

    ``delta`` maps covariance parameter names to inverse-gamma pairs; the
    M2 angle ``theta`` is always uniform on ``(0, pi/2)``. Use
    :meth:`default` to fill data-dependent entries.
    """

    beta_var: float = 1e6
    tau2: tuple = (0.1, 0.1)
    eta: tuple = (0.1, 0.1)
    delta: dict = field(default_factory=dict)
    mu_lam_var: float = 100.0
    mu_gam_var: float = 1.0
    sig2_lam: tuple = (3.0, 2.0)
    sig2_gam: tuple = (3.0, 2.0)
    phi_lam: tuple = (2.0, 1.0)
    phi_gam: tuple = (2.0, 1.0)

    @classmethod
    def default(cls, spec, coords, **overrides):
        """
        Defaults scaled to the site layout.

        Decay-type parameters get shape-2 (infinite variance) inverse gammas
        whose mean puts the practical range (correlation 0.05) at half the
        maximum inter-site distance; ``tau2`` and ``eta`` use IG(0.1, 0.1);
        M5 variance hyperparameters have mean 1 and variance 1.
        """
        half = 0.5 * float(pairwise_distances(coords).max())
        t05 = practical_range_arg(spec.nu)
        se_phi = half / math.sqrt(math.log(20.0))
        means = {
            "phi": half / t05,
            "lambda1": 1.0,
            "lambda2": 1.0,
            # Matern argument 2 sqrt(Q) with Q = d^2 / lambda^2
            "lambda1sq": (2.0 * half / t05) ** 2,
            "lambda2sq": (2.0 * half / t05) ** 2,
            # exponential kernel exp(-d / phi) falls to 0.05 at 3 phi
            "phi1": half / math.log(20.0),
            "phi2": half / math.log(20.0),
        }
        delta = {k: (2.0, means[k]) for k in spec.delta_names if k != "theta"}
        kw = dict(delta=delta, phi_lam=(2.0, se_phi), phi_gam=(2.0, se_phi))
        kw.update(overrides)
        return cls(**kw)


@dataclass
class ChainConfig:
    """Run length, thinning, seed, starting point and proposal tuning."""

    iterations: int = 50_000
    burnin: int = 10_000
    thin: int = 10
    seed: int = 0
    initial: ParameterState | None = None
    steps: dict = field(default_factory=dict)
    adapt_window: int = 50

    def __post_init__(self):
        if self.thin < 1:
            raise ConfigError("thinning must be at least 1")
        if not 0 <= self.burnin < self.iterations:
            raise ConfigError("burn-in must be shorter than the run")
        if (self.iterations - self.burnin) // self.thin < 1:
            raise ConfigError("no draws retained after burn-in and thinning")

    @classmethod
    def long_run(cls, model, **kw):
        """50,000 / 10,000 / 10 for M1-M4 and 700,000 / 100,000 / 100 for M5."""
        if model == "M5":
            base = dict(iterations=700_000, burnin=100_000, thin=100)
        else:
            base = dict(iterations=50_000, burnin=10_000, thin=10)
        base.update(kw)
        return cls(**base)

    @property
    def n_keep(self):
        return (self.iterations - self.burnin) // self.thin


@dataclass
class PosteriorSamples:
    """Retained draws, one row per draw, columns named by :func:`param_names`."""

    spec: ModelSpec
    names: list
    values: np.ndarray
    loglik: np.ndarray
    p: int
    site_ids: list
    acceptance: dict = field(default_factory=dict)
    burnin_acceptance: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.values)

    @classmethod
    def from_states(cls, spec, states, site_ids):
        """Wrap fixed parameter states (no chain) as a sample set."""
        states = list(states)
        if not states:
            raise ConfigError("need at least one state")
        p = len(states[0].beta)
        values = np.array([state_to_vector(s, spec) for s in states])
        return cls(spec, param_names(spec, p, site_ids), values, np.full(len(states), np.nan),
                   p, [str(s) for s in site_ids])

    def state(self, i):
        return vector_to_state(self.values[i], self.spec, self.p, len(self.site_ids))

    def states(self):
        for i in range(len(self)):
            yield self.state(i)

    def column(self, name):
        return self.values[:, self.names.index(name)]

    def mean_state(self):
        """Posterior mean of every parameter on its sampling scale."""
        return vector_to_state(self.values.mean(axis=0), self.spec, self.p, len(self.site_ids))

    def interval(self, name, level=0.95):
        lo = 0.5 * (1 - level)
        return tuple(np.quantile(self.column(name), [lo, 1 - lo]))


# --------------------------------------------------------------------------
# densities


def invgamma_logpdf(x, a, b):
    """Log density of the inverse gamma with shape ``a`` and scale ``b``."""
    if not x > 0:
        return -np.inf
    return a * math.log(b) - special.gammaln(a) - (a + 1) * math.log(x) - b / x


def _normal_logpdf(x, var):
    return -0.5 * (math.log(2 * math.pi * var) + x * x / var)


def _loglik_from_chol(r, tau2, chol_r):
    # r: residual z - Q beta; chol_r: lower factor of I + Omega / eta
    n = len(r)
    w = linalg.solve_triangular(chol_r, r, lower=True, check_finite=False)
    return (-0.5 * n * math.log(2 * math.pi) - 0.5 * n * math.log(tau2)
            - 0.5 * chol_logdet(chol_r) - 0.5 * float(w @ w) / tau2)


def _chol_r(omega, eta, state=None):
    n = omega.shape[0]
    return cholesky(np.eye(n) + omega / eta, scale=1.0, state=state)


def log_likelihood(model, state, omega):
    """
    Gaussian log-likelihood of ``model.z``.

    ``omega`` is the unit-diagonal correlation of the latent process; the
    covariance is ``tau2 * (I + omega / eta)``.
    """
    r = model.z - model.design @ state.beta
    return _loglik_from_chol(r, state.tau2, _chol_r(omega, state.eta, state))


def _latent_gram(coords, phi):
    d = pairwise_distances(coords)
    g = sq_exp_corr(d, phi)
    g[np.diag_indices_from(g)] += LATENT_JITTER
    return g


def _latent_field_logpdf(values, mean, sig2, chol_g):
    r = values - mean
    w = linalg.solve_triangular(chol_g, r, lower=True, check_finite=False)
    n = len(values)
    return (-0.5 * n * math.log(2 * math.pi * sig2) - 0.5 * chol_logdet(chol_g)
            - 0.5 * float(w @ w) / sig2)


def _latent_logprior(latent, coords, priors):
    out = 0.0
    out += _normal_logpdf(latent.mu_lam1, priors.mu_lam_var)
    out += _normal_logpdf(latent.mu_lam2, priors.mu_lam_var)
    out += _normal_logpdf(latent.mu_gam, priors.mu_gam_var)
    out += invgamma_logpdf(latent.sig2_lam, *priors.sig2_lam)
    out += invgamma_logpdf(latent.sig2_gam, *priors.sig2_gam)
    out += invgamma_logpdf(latent.phi_lam, *priors.phi_lam)
    out += invgamma_logpdf(latent.phi_gam, *priors.phi_gam)
    if not np.isfinite(out):
        return -np.inf
    lg = cholesky(_latent_gram(coords, latent.phi_lam), scale=1.0)
    gg = cholesky(_latent_gram(coords, latent.phi_gam), scale=1.0)
    out += _latent_field_logpdf(latent.loglam1, latent.mu_lam1, latent.sig2_lam, lg)
    out += _latent_field_logpdf(latent.loglam2, latent.mu_lam2, latent.sig2_lam, lg)
    out += _latent_field_logpdf(latent.gamma, latent.mu_gam, latent.sig2_gam, gg)
    return out


def _delta_logprior(delta, priors, spec):
    out = 0.0
    for name in spec.delta_names:
        x = delta[name]
        if name == "theta":
            if not 0.0 < x < HALF_PI:
                return -np.inf
            out -= math.log(HALF_PI)
        else:
            out += invgamma_logpdf(x, *priors.delta[name])
    return out


def log_prior(state, priors, spec, coords=None):
    """
    Sum of independent prior log densities; ``-inf`` outside the support.

    ``coords`` is needed for M5, whose latent fields have GP priors.
    """
    state.check(spec)
    out = sum(_normal_logpdf(b, priors.beta_var) for b in state.beta)
    out += invgamma_logpdf(state.tau2, *priors.tau2)
    out += invgamma_logpdf(state.eta, *priors.eta)
    out += _delta_logprior(state.delta, priors, spec)
    if not np.isfinite(out):
        return -np.inf
    if spec.model == "M5":
        if coords is None:
            raise ConfigError("M5 prior needs the site coordinates")
        out += _latent_logprior(state.latent, coords, priors)
    return float(out)


# --------------------------------------------------------------------------
# updates


def _beta_conditional(design, z, chol_r, tau2, beta_var):
    a = linalg.solve_triangular(chol_r, design, lower=True, check_finite=False)
    y = linalg.solve_triangular(chol_r, z, lower=True, check_finite=False)
    prec = a.T @ a / tau2 + np.eye(design.shape[1]) / beta_var
    lp = cholesky(prec)
    mean = linalg.cho_solve((lp, True), a.T @ y / tau2, check_finite=False)
    return mean, lp


def gibbs_beta(model, state, omega, rng, priors=None):
    """
    Draw ``beta`` from its normal full conditional.

    Precision ``Q^T Sigma^-1 Q + I / V0`` and mean
    ``precision^-1 Q^T Sigma^-1 z`` for the zero-mean ``N(0, V0 I)`` prior.
    """
    beta_var = (priors or PriorSpec()).beta_var
    chol_r = _chol_r(omega, state.eta, state)
    mean, lp = _beta_conditional(model.design, model.z, chol_r, state.tau2, beta_var)
    eps = rng.standard_normal(len(mean))
    return mean + linalg.solve_triangular(lp.T, eps, lower=False, check_finite=False)


def _to_free(x, kind):
    if kind == "log":
        return math.log(x)
    if kind == "logit":
        p = x / HALF_PI
        return math.log(p / (1 - p))
    return x


def _from_free(y, kind):
    if kind == "log":
        return math.exp(y)
    if kind == "logit":
        return HALF_PI * special.expit(y)
    return y


def _log_jac(x, kind):
    # log |dx / dy| for x = _from_free(y)
    if kind == "log":
        return math.log(x)
    if kind == "logit":
        p = x / HALF_PI
        return math.log(HALF_PI * p * (1 - p))
    return 0.0


def mh_block_update(values, log_target, step, rng, transforms=None, current=None,
                    proposal_chol=None):
    """
    One random-walk Metropolis step for a block of parameters.

    The walk runs on an unconstrained scale (``"log"`` for positive values,
    ``"logit"`` for angles in ``(0, pi/2)``, ``"none"`` otherwise) and the
    Jacobian of that change of variables enters the acceptance ratio, so the
    chain targets ``log_target`` on the original scale.

    Parameters
    ----------
    values : sequence of float
        Current block values.
    log_target : callable
        Log density (up to a constant) of the block values.
    step : float
        Proposal scale.
    rng : numpy.random.Generator
    transforms : sequence of str, optional
        Per-coordinate scale; defaults to all ``"log"``.
    current : float, optional
        ``log_target(values)`` if already known.
    proposal_chol : array, optional
        Lower Cholesky factor shaping the proposal (identity by default).

    Returns
    -------
    (new_values, accepted)
    """
    values = np.atleast_1d(np.asarray(values, dtype=float))
    kinds = transforms or ("log",) * len(values)
    if current is None:
        current = log_target(values)
    if not np.isfinite(current):
        raise NumericalError("log target is not finite at the current state", values)
    y = np.array([_to_free(v, k) for v, k in zip(values, kinds)])
    eps = rng.standard_normal(len(y))
    if proposal_chol is not None:
        eps = proposal_chol @ eps
    y_new = y + step * eps
    new = np.array([_from_free(v, k) for v, k in zip(y_new, kinds)])
    jac = sum(_log_jac(v, k) for v, k in zip(new, kinds)) - \
        sum(_log_jac(v, k) for v, k in zip(values, kinds))
    if not np.all(np.isfinite(new)) or np.any(new[[k != "none" for k in kinds]] <= 0):
        return values, False
    try:
        proposed = log_target(new)
    except NumericalError:
        return values, False
    log_ratio = proposed - current + jac
    if np.isfinite(log_ratio) and math.log(rng.random()) < log_ratio:
        return new, True
    return values, False


# --------------------------------------------------------------------------
# chain


def initial_state(model, spec, priors):
    """Data-driven starting point: OLS ``beta``, half the residual variance
    as ``tau2``, ``eta = 1`` and prior means for the covariance block."""
    q, z = model.design, model.z
    beta = np.linalg.lstsq(q, z, rcond=None)[0]
    resid = z - q @ beta
    tau2 = max(float(np.var(resid)) / 2.0, 1e-6)
    delta = {}
    for name in spec.delta_names:
        if name == "theta":
            delta[name] = math.pi / 4
        else:
            a, b = priors.delta[name]
            delta[name] = b / (a - 1) if a > 1 else b
    latent = None
    if spec.model == "M5":
        n = model.n
        lam0 = _default_loglam(model, spec)
        latent = LatentFields(np.full(n, lam0), np.full(n, lam0), np.zeros(n),
                              mu_lam1=lam0, mu_lam2=lam0, sig2_lam=1.0,
                              phi_lam=priors.phi_lam[1] / max(priors.phi_lam[0] - 1, 1.0),
                              mu_gam=0.0, sig2_gam=1.0,
                              phi_gam=priors.phi_gam[1] / max(priors.phi_gam[0] - 1, 1.0))
    return ParameterState(beta, tau2, 1.0, delta, latent)


def _default_loglam(model, spec):
    # kernel eigenvalue whose isotropic Matern range is half the site spread
    half = 0.5 * model.max_distance
    return 2.0 * math.log(2.0 * half / practical_range_arg(spec.nu))


class _Adapter:
    """Robbins-Monro tuning of a log proposal scale, plus (optionally) the
    empirical covariance of the block on its free scale."""

    def __init__(self, step, dim, window, learn_cov=False):
        self.log_step = math.log(step)
        self.window = window
        self.count = 0
        self.accepted = 0
        self.burn_acc = [0, 0]
        self.post_acc = [0, 0]
        self.dim = dim
        self.learn_cov = learn_cov and dim > 1
        self.history = []
        self.chol = None

    @property
    def step(self):
        return math.exp(self.log_step)

    def record(self, accepted, adapting, free_values=None):
        acc = self.burn_acc if adapting else self.post_acc
        acc[0] += int(accepted)
        acc[1] += 1
        if not adapting:
            return
        self.count += 1
        gain = (1.0 + self.count / self.window) ** -0.6
        self.log_step += gain * (float(accepted) - TARGET_ACCEPT)
        if self.learn_cov and free_values is not None:
            self.history.append(np.array(free_values))
            k = len(self.history)
            if k >= 4 * self.window and k % self.window == 0:
                h = np.array(self.history[k // 2:])
                cov = np.cov(h.T) + 1e-8 * np.eye(self.dim)
                try:
                    # fold the current overall scale into the new shape
                    new = np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    return
                if self.chol is None:
                    self.log_step = math.log(2.38 / math.sqrt(self.dim))
                self.chol = new

    @staticmethod
    def rate(acc):
        return acc[0] / acc[1] if acc[1] else float("nan")


class _Sampler:
    """Mutable chain state with cached factorizations."""

    def __init__(self, model, spec, priors, config):
        if spec.needs_wind and model.winds is None:
            raise ConfigError(f"{spec.model} needs wind vectors at every site")
        self.model, self.spec, self.priors, self.cfg = model, spec, priors, config
        self.rng = np.random.Generator(np.random.PCG64(config.seed))
        state = (config.initial or initial_state(model, spec, priors)).copy()
        state.check(spec)
        self.state = state
        self.names = list(spec.delta_names)
        self.kinds = tuple("logit" if k == "theta" else "log" for k in self.names)
        win = config.adapt_window
        self.block = _Adapter(config.steps.get("cov", 0.1), 1 + len(self.names), win,
                              learn_cov=True)
        if spec.model == "M5":
            n = model.n
            s0 = config.steps.get("latent", 0.3)
            self.lat_adapt = {f: [_Adapter(s0, 1, win) for _ in range(n)]
                              for f in ("loglam1", "loglam2", "gamma")}
            self.phi_adapt = {f: _Adapter(config.steps.get(f, 0.2), 1, win)
                              for f in ("phi_lam", "phi_gam")}
            self._init_m5_caches()
        self.omega = self._omega(state)
        self._refresh()

    # ---- likelihood caches ------------------------------------------------

    def _omega(self, state):
        return self.model.correlation(self.spec, state)

    def _refresh(self):
        self.chol_r = _chol_r(self.omega, self.state.eta, self.state.copy())
        self.resid = self.model.z - self.model.design @ self.state.beta
        self.loglik = _loglik_from_chol(self.resid, self.state.tau2, self.chol_r)
        if not np.isfinite(self.loglik):
            raise NumericalError("log-likelihood is not finite", self.state.copy())

    def _loglik_with(self, omega, eta):
        chol = _chol_r(omega, eta)
        return _loglik_from_chol(self.resid, self.state.tau2, chol), chol

    # ---- conjugate steps --------------------------------------------------

    def update_beta(self):
        m, st = self.model, self.state
        mean, lp = _beta_conditional(m.design, m.z, self.chol_r, st.tau2, self.priors.beta_var)
        eps = self.rng.standard_normal(len(mean))
        st.beta = mean + linalg.solve_triangular(lp.T, eps, lower=False, check_finite=False)
        self.resid = m.z - m.design @ st.beta

    def update_tau2(self):
        a, b = self.priors.tau2
        w = linalg.solve_triangular(self.chol_r, self.resid, lower=True, check_finite=False)
        shape = a + 0.5 * self.model.n
        scale = b + 0.5 * float(w @ w)
        self.state.tau2 = scale / self.rng.gamma(shape)
        self.loglik = _loglik_from_chol(self.resid, self.state.tau2, self.chol_r)

    # ---- eta + delta block --------------------------------------------------

    def update_cov_block(self, adapting):
        st = self.state
        pri, spec = self.priors, self.spec
        kinds = ("log",) + self.kinds
        cache = {}

        def target(vals):
            eta = vals[0]
            delta = dict(zip(self.names, vals[1:]))
            lp = invgamma_logpdf(eta, *pri.eta) + _delta_logprior(delta, pri, spec)
            if not np.isfinite(lp):
                return -np.inf
            if spec.model == "M5" or delta == st.delta:
                omega = self.omega
            else:
                trial = ParameterState(st.beta, st.tau2, eta, delta, st.latent)
                omega = self._omega(trial)
            ll, chol = self._loglik_with(omega, eta)
            cache[tuple(vals)] = (omega, chol, ll)
            return ll + lp

        cur_vals = np.array([st.eta] + [st.delta[k] for k in self.names])
        current = (self.loglik + invgamma_logpdf(st.eta, *pri.eta)
                   + _delta_logprior(st.delta, pri, spec))
        new, ok = mh_block_update(cur_vals, target, self.block.step, self.rng, kinds,
                                  current=current, proposal_chol=self.block.chol)
        if ok:
            st.eta = float(new[0])
            st.delta = {k: float(v) for k, v in zip(self.names, new[1:])}
            self.omega, self.chol_r, self.loglik = cache[tuple(new)]
        free = [_to_free(v, k) for v, k in zip([st.eta] + [st.delta[k] for k in self.names],
                                                kinds)]
        self.block.record(ok, adapting, free)

    # ---- M5 latent fields -------------------------------------------------

    def _init_m5_caches(self):
        lat = self.state.latent
        self.kern = m5_sigma_fields(lat)
        self._latent_factor("lam", lat.phi_lam)
        self._latent_factor("gam", lat.phi_gam)

    def _latent_factor(self, which, phi):
        g = _latent_gram(self.model.coords, phi)
        chol = cholesky(g, scale=1.0)
        prec = linalg.cho_solve((chol, True), np.eye(len(g)), check_finite=False)
        setattr(self, f"chol_{which}", chol)
        setattr(self, f"prec_{which}", prec)

    def _kernel_at(self, k, l1, l2, g):
        lat = LatentFields([l1], [l2], [g])
        return m5_sigma_fields(lat)[0]

    def _omega_row(self, k, kern_k):
        x = self.model.coords
        kern = self.kern.copy()
        kern[k] = kern_k
        row = kernels.ns_matern_cross(x[k:k + 1], kern[k:k + 1], x, kern, float(self.spec.nu))
        return row[0], kern

    def update_latent(self, adapting):
        lat = self.state.latent
        n = self.model.n
        fields = (("loglam1", "lam", "mu_lam1", "sig2_lam"),
                  ("loglam2", "lam", "mu_lam2", "sig2_lam"),
                  ("gamma", "gam", "mu_gam", "sig2_gam"))
        for fname, which, mu_name, s2_name in fields:
            prec = getattr(self, f"prec_{which}")
            for k in range(n):
                vals = getattr(lat, fname)
                mu, s2 = getattr(lat, mu_name), getattr(lat, s2_name)
                r = vals - mu
                pr_k = float(prec[k] @ r)
                ad = self.lat_adapt[fname][k]
                delta = ad.step * self.rng.standard_normal()
                # change of -0.5 r^T P r / s2 when r_k moves by delta
                dprior = -(delta * pr_k + 0.5 * delta * delta * prec[k, k]) / s2
                triple = [lat.loglam1[k], lat.loglam2[k], lat.gamma[k]]
                triple[("loglam1", "loglam2", "gamma").index(fname)] += delta
                kern_k = self._kernel_at(k, *triple)
                row, kern = self._omega_row(k, kern_k)
                omega = self.omega.copy()
                omega[k, :] = row
                omega[:, k] = row
                omega[k, k] = 1.0
                try:
                    ll, chol = self._loglik_with(omega, self.state.eta)
                except NumericalError:
                    ad.record(False, adapting)
                    continue
                ok = math.log(self.rng.random()) < ll - self.loglik + dprior
                if ok:
                    vals[k] += delta
                    self.omega, self.chol_r, self.loglik, self.kern = omega, chol, ll, kern
                ad.record(ok, adapting)

    def update_latent_hyper(self, adapting):
        lat = self.state.latent
        pri = self.priors
        rng = self.rng
        n = self.model.n
        ones = np.ones(n)
        # conjugate normal means
        for fname, which, mu_name, s2_name, var0 in (
                ("loglam1", "lam", "mu_lam1", "sig2_lam", pri.mu_lam_var),
                ("loglam2", "lam", "mu_lam2", "sig2_lam", pri.mu_lam_var),
                ("gamma", "gam", "mu_gam", "sig2_gam", pri.mu_gam_var)):
            prec = getattr(self, f"prec_{which}")
            s2 = getattr(lat, s2_name)
            p1 = prec @ ones
            post_prec = float(ones @ p1) / s2 + 1.0 / var0
            post_mean = float(p1 @ getattr(lat, fname)) / s2 / post_prec
            setattr(lat, mu_name, post_mean + rng.standard_normal() / math.sqrt(post_prec))
        # conjugate inverse-gamma variances
        r1 = lat.loglam1 - lat.mu_lam1
        r2 = lat.loglam2 - lat.mu_lam2
        rg = lat.gamma - lat.mu_gam
        a, b = pri.sig2_lam
        lat.sig2_lam = (b + 0.5 * float(r1 @ self.prec_lam @ r1 + r2 @ self.prec_lam @ r2)) \
            / rng.gamma(a + n)
        a, b = pri.sig2_gam
        lat.sig2_gam = (b + 0.5 * float(rg @ self.prec_gam @ rg)) / rng.gamma(a + 0.5 * n)
        # decay parameters
        for phi_name, which, resids, s2 in (("phi_lam", "lam", (r1, r2), lat.sig2_lam),
                                            ("phi_gam", "gam", (rg,), lat.sig2_gam)):
            prior = getattr(pri, phi_name)
            coords = self.model.coords
            cache = {}

            def target(v, resids=resids, s2=s2, prior=prior):
                phi = float(v[0])
                lp = invgamma_logpdf(phi, *prior)
                if not np.isfinite(lp):
                    return -np.inf
                chol = cholesky(_latent_gram(coords, phi), scale=1.0)
                cache[phi] = chol
                return lp + sum(_latent_field_logpdf(r, 0.0, s2, chol) for r in resids)

            ad = self.phi_adapt[phi_name]
            new, ok = mh_block_update([getattr(lat, phi_name)], target, ad.step, rng)
            if ok:
                setattr(lat, phi_name, float(new[0]))
                self._latent_factor(which, float(new[0]))
            ad.record(ok, adapting)

    # ---- driver -------------------------------------------------------------

    def step(self, adapting):
        self.update_beta()
        self.update_tau2()
        self.update_cov_block(adapting)
        if self.spec.model == "M5":
            self.update_latent(adapting)
            self.update_latent_hyper(adapting)
            self._refresh()
        else:
            self.resid = self.model.z - self.model.design @ self.state.beta

    def acceptance(self, post=True):
        key = "post_acc" if post else "burn_acc"
        out = {"eta+delta": _Adapter.rate(getattr(self.block, key))}
        if self.spec.model == "M5":
            for f, ads in self.lat_adapt.items():
                tot = [sum(getattr(a, key)[0] for a in ads), sum(getattr(a, key)[1] for a in ads)]
                out[f] = _Adapter.rate(tot)
            for f, ad in self.phi_adapt.items():
                out[f] = _Adapter.rate(getattr(ad, key))
        return out


def run_chain(model, spec, priors=None, config=None, progress=None):
    """
    Run one MCMC chain.

    Parameters
    ----------
    model : ObservationModel
    spec : ModelSpec
    priors : PriorSpec, optional
        Defaults to :meth:`PriorSpec.default` for the site layout.
    config : ChainConfig, optional
        Defaults to the long run for the model.
    progress : callable, optional
        Called as ``progress(iteration)`` every 1000 iterations.

    Returns
    -------
    PosteriorSamples
        ``(iterations - burnin) // thin`` draws. Identical seeds give
        identical draws.
    """
    priors = priors or PriorSpec.default(spec, model.coords)
    config = config or ChainConfig.long_run(spec.model)
    s = _Sampler(model, spec, priors, config)
    names = param_names(spec, model.p, model.site_ids)
    keep = np.empty((config.n_keep, len(names)))
    ll = np.empty(config.n_keep)
    k = 0
    for it in range(config.iterations):
        adapting = it < config.burnin
        try:
            s.step(adapting)
        except NumericalError as err:
            err.state = s.state.copy()
            logger.error("chain aborted at iteration %d; state: %r", it, err.state)
            raise
        if not adapting and (it + 1 - config.burnin) % config.thin == 0 and k < config.n_keep:
            keep[k] = state_to_vector(s.state, spec)
            ll[k] = s.loglik
            k += 1
        if progress is not None and (it + 1) % 1000 == 0:
            progress(it + 1)
    return PosteriorSamples(
        spec=spec, names=names, values=keep, loglik=ll, p=model.p,
        site_ids=list(model.site_ids), acceptance=s.acceptance(True),
        burnin_acceptance=s.acceptance(False),
        meta={"iterations": config.iterations, "burnin": config.burnin,
              "thin": config.thin, "seed": config.seed},
    )
