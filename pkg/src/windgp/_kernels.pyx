# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled covariance kernels; mirror of ``windgp._kernels_py``."""

import numpy as np

from libc.math cimport exp, fabs, isfinite, pow, sqrt, tgamma
from scipy.special.cython_special cimport kv


cdef inline double _matern(double arg, double nu, double norm) noexcept nogil:
    cdef double val
    if arg <= 0.0:
        return 1.0
    val = norm * pow(arg, nu) * kv(nu, arg)
    if not isfinite(val):
        return 0.0
    return val


def matern_of_arg(arg, double nu):
    cdef double[::1] a = np.ascontiguousarray(arg, dtype=np.float64).ravel()
    cdef Py_ssize_t k, n = a.shape[0]
    cdef double norm = 1.0 / (pow(2.0, nu - 1.0) * tgamma(nu))
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for k in range(n):
            o[k] = _matern(a[k], nu, norm)
    return out.reshape(np.shape(arg))


cdef inline void _pair(double[:, ::1] xa, double[:, :, ::1] sa,
                       double[:, ::1] xb, double[:, :, ::1] sb,
                       double[::1] qda, double[::1] qdb,
                       Py_ssize_t i, Py_ssize_t j,
                       double* pref, double* q) noexcept nogil:
    cdef double d0 = xa[i, 0] - xb[j, 0]
    cdef double d1 = xa[i, 1] - xb[j, 1]
    cdef double m00 = 0.5 * (sa[i, 0, 0] + sb[j, 0, 0])
    cdef double m01 = 0.5 * (sa[i, 0, 1] + sb[j, 0, 1])
    cdef double m11 = 0.5 * (sa[i, 1, 1] + sb[j, 1, 1])
    cdef double det = m00 * m11 - m01 * m01
    cdef double qq = (d0 * d0 * m11 - 2.0 * d0 * d1 * m01 + d1 * d1 * m00) / det
    if qq < 0.0:
        qq = 0.0
    q[0] = qq
    pref[0] = qda[i] * qdb[j] / sqrt(det)


cdef double[::1] _quarter_dets(double[:, :, ::1] s):
    cdef Py_ssize_t k, n = s.shape[0]
    out = np.empty(n)
    cdef double[::1] o = out
    for k in range(n):
        o[k] = pow(s[k, 0, 0] * s[k, 1, 1] - s[k, 0, 1] * s[k, 1, 0], 0.25)
    return o


def ns_matern_cross(xa, sa, xb, sb, double nu, bint symmetric=False):
    cdef double[:, ::1] xa_ = np.ascontiguousarray(xa, dtype=np.float64)
    cdef double[:, :, ::1] sa_ = np.ascontiguousarray(sa, dtype=np.float64)
    cdef double[:, ::1] xb_ = np.ascontiguousarray(xb, dtype=np.float64)
    cdef double[:, :, ::1] sb_ = np.ascontiguousarray(sb, dtype=np.float64)
    cdef Py_ssize_t na = xa_.shape[0], nb = xb_.shape[0], i, j, j0
    cdef double[::1] qda = _quarter_dets(sa_)
    cdef double[::1] qdb = _quarter_dets(sb_)
    cdef double norm = 1.0 / (pow(2.0, nu - 1.0) * tgamma(nu))
    cdef double pref, q, val
    out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    symmetric = symmetric and na == nb
    with nogil:
        for i in range(na):
            j0 = i if symmetric else 0
            for j in range(j0, nb):
                _pair(xa_, sa_, xb_, sb_, qda, qdb, i, j, &pref, &q)
                val = pref * _matern(2.0 * sqrt(nu * q), nu, norm)
                o[i, j] = val
                if symmetric:
                    o[j, i] = val
    return out


def ns_gauss_cross(xa, sa, xb, sb, bint symmetric=False):
    cdef double[:, ::1] xa_ = np.ascontiguousarray(xa, dtype=np.float64)
    cdef double[:, :, ::1] sa_ = np.ascontiguousarray(sa, dtype=np.float64)
    cdef double[:, ::1] xb_ = np.ascontiguousarray(xb, dtype=np.float64)
    cdef double[:, :, ::1] sb_ = np.ascontiguousarray(sb, dtype=np.float64)
    cdef Py_ssize_t na = xa_.shape[0], nb = xb_.shape[0], i, j, j0
    cdef double[::1] qda = _quarter_dets(sa_)
    cdef double[::1] qdb = _quarter_dets(sb_)
    cdef double pref, q, val
    out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    symmetric = symmetric and na == nb
    with nogil:
        for i in range(na):
            j0 = i if symmetric else 0
            for j in range(j0, nb):
                _pair(xa_, sa_, xb_, sb_, qda, qdb, i, j, &pref, &q)
                val = pref * exp(-q)
                o[i, j] = val
                if symmetric:
                    o[j, i] = val
    return out


def projection_alpha(xa, wa, xg, wg, double phi1, double phi2):
    cdef double[:, ::1] xa_ = np.ascontiguousarray(xa, dtype=np.float64)
    cdef double[:, ::1] wa_ = np.ascontiguousarray(wa, dtype=np.float64)
    cdef double[:, ::1] xg_ = np.ascontiguousarray(xg, dtype=np.float64)
    cdef double[:, ::1] wg_ = np.ascontiguousarray(wg, dtype=np.float64)
    cdef Py_ssize_t na = xa_.shape[0], m = xg_.shape[0], i, l
    cdef double d0, d1, dist, r0, r1, pnorm
    out = np.empty((na, m))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(na):
            for l in range(m):
                d0 = xa_[i, 0] - xg_[l, 0]
                d1 = xa_[i, 1] - xg_[l, 1]
                dist = sqrt(d0 * d0 + d1 * d1)
                if dist == 0.0:
                    o[i, l] = 1.0
                    continue
                r0 = 0.5 * (wa_[i, 0] + wg_[l, 0])
                r1 = 0.5 * (wa_[i, 1] + wg_[l, 1])
                pnorm = fabs(r0 * d0 + r1 * d1) / dist
                o[i, l] = exp(-dist / (phi1 + phi2 * pnorm))
    return out
