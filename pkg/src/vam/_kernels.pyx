# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. See ``vam._fallback`` for the reference semantics."""
import numpy as np

from libc.math cimport exp, sqrt


def kprototype_cross(const double[:, ::1] xs, const long long[:, ::1] xc,
                     const double[:, ::1] ys, const long long[:, ::1] yc,
                     double gamma):
    cdef Py_ssize_t nx = xs.shape[0], ny = ys.shape[0]
    cdef Py_ssize_t nnum = xs.shape[1], ncat = xc.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, d, mism
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                acc = 0.0
                for k in range(nnum):
                    d = xs[i, k] - ys[j, k]
                    acc = acc + d * d
                mism = 0.0
                for k in range(ncat):
                    if xc[i, k] != yc[j, k]:
                        mism = mism + 1.0
                o[i, j] = sqrt(acc + gamma * mism)
    return out


def rate_adjusted_cross(const double[:, ::1] xf, const double[::1] xage,
                        const long long[:, ::1] xc,
                        const double[:, ::1] yf, const double[::1] yage,
                        const long long[:, ::1] yc,
                        double max_age, double gamma):
    cdef Py_ssize_t nx = xf.shape[0], ny = yf.shape[0], ncat = xc.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, d, mism
    out = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(nx):
            for j in range(ny):
                d = xf[i, 0] - yf[j, 0]
                acc = exp((xage[i] + yage[j]) / 2.0 - max_age) * (d * d)
                for k in range(1, 3):
                    d = xf[i, k] - yf[j, k]
                    acc = acc + d * d
                mism = 0.0
                for k in range(ncat):
                    if xc[i, k] != yc[j, k]:
                        mism = mism + 1.0
                o[i, j] = sqrt(acc + gamma * mism)
    return out


def va_liabilities(const double[:, ::1] growth, const double[::1] av0s,
                   double gd0, double gw0, double wr,
                   const double[::1] death_w, const double[::1] surv_w,
                   const double[::1] disc):
    cdef Py_ssize_t m = growth.shape[0], horizon = growth.shape[1]
    cdef Py_ssize_t nk = av0s.shape[0]
    cdef Py_ssize_t s, t, k
    cdef double av, gd, balance, w, cost, total, shortfall
    cdef double planned = wr * gw0
    out = np.empty((nk, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for k in range(nk):
            for s in range(m):
                av = av0s[k]
                gd = gd0
                balance = gw0
                total = 0.0
                for t in range(horizon):
                    av = av * growth[s, t]
                    cost = gd - av
                    if cost < 0.0:
                        cost = 0.0
                    cost = death_w[t] * cost
                    if planned > 0.0 and balance > 0.0:
                        w = planned if planned < balance else balance
                        shortfall = w - av
                        if shortfall < 0.0:
                            shortfall = 0.0
                        cost = cost + surv_w[t] * shortfall
                        av = av - w
                        if av < 0.0:
                            av = 0.0
                        balance = balance - w
                        gd = gd0 * balance / gw0
                    total = total + disc[t] * cost
                o[k, s] = total
    return out
