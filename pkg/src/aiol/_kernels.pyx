# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: softmax confidence, temperature NLL, 1-D two-component EM."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, M_PI

cnp.import_array()


def confidence_scores(logits, double T):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef Py_ssize_t n = z.shape[0], K = z.shape[1], i, j
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double zmax, acc
    for i in range(n):
        zmax = z[i, 0]
        for j in range(1, K):
            if z[i, j] > zmax:
                zmax = z[i, j]
        acc = 0.0
        for j in range(K):
            acc += exp((z[i, j] - zmax) / T)
        out[i] = 1.0 / acc
    return out_arr


def temperature_nll(logits, labels, double T):
    cdef const double[:, ::1] z = np.ascontiguousarray(logits, dtype=np.float64)
    cdef const long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = z.shape[0], K = z.shape[1], i, j
    cdef double zmax, acc, total = 0.0
    for i in range(n):
        zmax = z[i, 0] / T
        for j in range(1, K):
            if z[i, j] / T > zmax:
                zmax = z[i, j] / T
        acc = 0.0
        for j in range(K):
            acc += exp(z[i, j] / T - zmax)
        total += zmax + log(acc) - z[i, y[i]] / T
    return total


cdef double _e_step(const double[::1] x, double[::1] w, double[::1] mu, double[::1] var,
                    double[:, ::1] resp) nogil:
    cdef Py_ssize_t n = x.shape[0], i
    cdef double c0, c1, l0, l1, m, lse, d, total = 0.0
    c0 = log(w[0]) - 0.5 * (log(2.0 * M_PI) + log(var[0]))
    c1 = log(w[1]) - 0.5 * (log(2.0 * M_PI) + log(var[1]))
    for i in range(n):
        d = x[i] - mu[0]
        l0 = c0 - d * d / (2.0 * var[0])
        d = x[i] - mu[1]
        l1 = c1 - d * d / (2.0 * var[1])
        m = l0 if l0 > l1 else l1
        lse = m + log(exp(l0 - m) + exp(l1 - m))
        resp[i, 0] = exp(l0 - lse)
        resp[i, 1] = exp(l1 - lse)
        total += lse
    return total


def em_gmm_1d(x_in, w0, mu0, var0, int max_iters, double tol, double var_floor):
    """Two-component EM. Returns (w, mu, var, loglik_history, n_iter)."""
    cdef const double[::1] x = np.ascontiguousarray(x_in, dtype=np.float64)
    w_arr = np.array(w0, dtype=np.float64)
    mu_arr = np.array(mu0, dtype=np.float64)
    var_arr = np.array(var0, dtype=np.float64)
    cdef double[::1] w = w_arr, mu = mu_arr, var = var_arr
    cdef Py_ssize_t n = x.shape[0], i
    cdef int k, it, n_iter = 0
    resp_arr = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] resp = resp_arr
    cdef double nk[2]
    cdef double s, d, ll, ll_prev, wsum
    ll_prev = _e_step(x, w, mu, var, resp)
    history = [ll_prev]
    for it in range(max_iters):
        for k in range(2):
            s = 0.0
            for i in range(n):
                s += resp[i, k]
            nk[k] = s
        for k in range(2):
            if nk[k] > 0.0:
                s = 0.0
                for i in range(n):
                    s += resp[i, k] * x[i]
                mu[k] = s / nk[k]
                s = 0.0
                for i in range(n):
                    d = x[i] - mu[k]
                    s += resp[i, k] * d * d
                s = s / nk[k]
                var[k] = s if s > var_floor else var_floor
        wsum = 0.0
        for k in range(2):
            w[k] = nk[k] / n
            if w[k] < 1e-300:
                w[k] = 1e-300
            wsum += w[k]
        for k in range(2):
            w[k] = w[k] / wsum
        ll = _e_step(x, w, mu, var, resp)
        history.append(ll)
        n_iter += 1
        if ll - ll_prev < tol:
            break
        ll_prev = ll
    return w_arr, mu_arr, var_arr, np.array(history), n_iter
