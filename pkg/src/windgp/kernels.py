"""
Backend selection for the covariance hot loops.

The compiled extension is preferred; set ``WINDGP_BACKEND=python`` to force
the numpy fallback (useful for debugging and for benchmarking the two).
"""

import os

from windgp import _kernels_py

__all__ = ["BACKEND", "get_backend", "matern_of_arg", "ns_matern_cross",
           "ns_gauss_cross", "projection_alpha"]


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"`` or ``"python"``)."""
    name = name or os.environ.get("WINDGP_BACKEND", "cython")
    if name == "python":
        return _kernels_py
    if name != "cython":
        raise ValueError(f"unknown kernel backend {name!r}")
    try:
        from windgp import _kernels
    except ImportError:
        return _kernels_py
    return _kernels


_impl = get_backend()
BACKEND = "python" if _impl is _kernels_py else "cython"

matern_of_arg = _impl.matern_of_arg
ns_matern_cross = _impl.ns_matern_cross
ns_gauss_cross = _impl.ns_gauss_cross
projection_alpha = _impl.projection_alpha
