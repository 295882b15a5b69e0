"""Cholesky with bounded diagonal jitter, and small solve helpers."""

import numpy as np
from scipy import linalg

from windgp.errors import NumericalError

__all__ = ["JITTER_START", "JITTER_MAX", "cholesky", "chol_solve", "chol_logdet",
           "mvn_logpdf_chol"]

JITTER_START = 1e-10
JITTER_MAX = 1e-6


def cholesky(mat, scale=None, state=None):
    """
    Lower Cholesky factor of ``mat``.

    On failure, ``eps * scale`` is added to the diagonal with ``eps`` going
    1e-10, 1e-9, ..., 1e-6; ``scale`` defaults to the mean diagonal entry.
    """
    try:
        return linalg.cholesky(mat, lower=True, check_finite=False)
    except (linalg.LinAlgError, ValueError):
        pass
    if not np.all(np.isfinite(mat)):
        raise NumericalError("matrix has non-finite entries", state)
    if scale is None:
        scale = float(np.mean(np.diag(mat)))
    eps = JITTER_START
    eye = np.eye(mat.shape[0])
    while eps <= JITTER_MAX * (1 + 1e-9):
        try:
            return linalg.cholesky(mat + eps * scale * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            eps *= 10.0
    raise NumericalError("Cholesky factorization failed after jitter escalation", state)


def chol_solve(chol, b):
    return linalg.cho_solve((chol, True), b, check_finite=False)


def chol_logdet(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def mvn_logpdf_chol(x, mean, chol):
    """Multivariate normal log-density given the lower Cholesky factor of the covariance."""
    r = linalg.solve_triangular(chol, np.asarray(x) - mean, lower=True, check_finite=False)
    n = chol.shape[0]
    return -0.5 * n * np.log(2 * np.pi) - 0.5 * chol_logdet(chol) - 0.5 * float(r @ r)
