import numpy as np
import pytest

from windgp import kernels

BACKENDS = ["python"]
try:
    from windgp import _kernels as _compiled  # noqa: F401
    BACKENDS.append("cython")
except ImportError:
    pass


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = kernels.get_backend(request.param)
    for name in ("matern_of_arg", "ns_matern_cross", "ns_gauss_cross", "projection_alpha"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, lo=0.2, hi=3.0):
    """``n`` random 2x2 SPD matrices with eigenvalues in ``[lo, hi]``."""
    ang = rng.uniform(0, np.pi, n)
    ev = rng.uniform(lo, hi, (n, 2))
    c, s = np.cos(ang), np.sin(ang)
    r = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return r @ (ev[:, :, None] * np.eye(2)) @ r.transpose(0, 2, 1)


def random_winds(rng, n):
    a = rng.uniform(-np.pi, np.pi, n)
    return np.column_stack([np.cos(a), np.sin(a)])


# acceptance criterion results, printed at the end of the session
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")

