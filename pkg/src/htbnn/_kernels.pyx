# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward pass and componentwise Metropolis sweep.

Argument lists match ``_fallback.py``.  Only the Student (family 0) and
Gaussian (family 1) prior families are handled here.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, exp, log1p, fabs, isfinite, INFINITY, M_PI

cnp.import_array()

NAME = "cython"


cdef inline double _log_h_scaled(double theta, double lis, int family, double nu,
                                 double log_norm) nogil:
    cdef double la, s, sp, x2
    if theta == 0.0:
        la = -INFINITY
    else:
        la = log(fabs(theta)) + lis
    if family == 0:
        s = 2.0 * la - log(nu)
        if s > 0:
            sp = s + log1p(exp(-s))
        else:
            sp = log1p(exp(s))
        return log_norm - 0.5 * (nu + 1.0) * sp + lis
    if la < 350.0:
        x2 = exp(2.0 * la)
    else:
        x2 = INFINITY
    return -0.5 * log(2.0 * M_PI) - 0.5 * x2 + lis


def log_h_scaled(double theta, double log_inv_sigma, int family, double nu, double log_norm,
                 custom=None):
    if family not in (0, 1):
        raise ValueError("compiled kernels support the Student and Gaussian families only")
    return _log_h_scaled(theta, log_inv_sigma, family, nu, log_norm)


def forward_cache(double[::1] theta, long[::1] widths, long[::1] toff, long[::1] hoff,
                  double[:, ::1] X, double[:, ::1] Z, double[:, ::1] A, double[::1] out):
    cdef Py_ssize_t n = X.shape[0]
    cdef int L = widths.shape[0] - 2
    cdef Py_ssize_t maxw = 0
    cdef Py_ssize_t p, l, r, c, rows, cols, base
    cdef double s
    for l in range(L + 2):
        if widths[l] > maxw:
            maxw = widths[l]
    cdef double[::1] buf0 = np.empty(maxw)
    cdef double[::1] buf1 = np.empty(maxw)
    cdef double* cur
    cdef double* nxt
    cdef double* tmp
    with nogil:
        cur = &buf0[0]
        nxt = &buf1[0]
        for p in range(n):
            for c in range(widths[0]):
                cur[c] = X[p, c]
            for l in range(L + 1):
                rows = widths[l + 1]
                cols = widths[l]
                for r in range(rows):
                    base = toff[l] + r * (cols + 1)
                    s = 0.0
                    for c in range(cols):
                        s += theta[base + 1 + c] * cur[c]
                    s += theta[base]
                    if l < L:
                        Z[p, hoff[l] + r] = s
                        nxt[r] = s if s > 0.0 else 0.0
                        A[p, hoff[l] + r] = nxt[r]
                    else:
                        out[p] = s
                tmp = cur
                cur = nxt
                nxt = tmp


def forward_theta(double[::1] theta, long[::1] widths, long[::1] toff, double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0]
    cdef int L = widths.shape[0] - 2
    cdef Py_ssize_t H = 0
    cdef Py_ssize_t l
    for l in range(L):
        H += widths[l + 1]
    hoff = np.zeros(max(L, 1), dtype=np.int_)
    for l in range(1, L):
        hoff[l] = hoff[l - 1] + widths[l]
    Z = np.empty((n, max(H, 1)))
    A = np.empty((n, max(H, 1)))
    out = np.empty(n)
    forward_cache(theta, widths, toff, hoff, X, Z, A, out)
    return out[:, None]


def run_sweeps(double[::1] theta, long[::1] widths, long[::1] toff, long[::1] hoff,
               double[:, ::1] X, double[::1] Y, double[:, ::1] Z, double[:, ::1] A,
               double[::1] out,
               long[::1] coord_layer, long[::1] coord_row, long[::1] coord_col,
               long[::1] coords, double[::1] scale, double[::1] log_inv_sigma,
               double[:, ::1] u_move, double[:, ::1] normals, double[:, ::1] refresh_vals,
               double[:, ::1] u_acc,
               double alpha, int family, double nu, double log_norm, double refresh_prob,
               long[::1] acc_rw, long[::1] try_rw, long[::1] acc_ref, long[::1] try_ref,
               long thin, double[:, ::1] samples, double[::1] sse_trace,
               double[:, ::1] zbuf, custom=None):
    if family not in (0, 1):
        raise ValueError("compiled kernels support the Student and Gaussian families only")
    cdef Py_ssize_t n = X.shape[0]
    cdef int L = widths.shape[0] - 2
    cdef Py_ssize_t n_sweeps = u_move.shape[0]
    cdef Py_ssize_t n_coords = coords.shape[0]
    cdef Py_ssize_t T = theta.shape[0]
    cdef Py_ssize_t maxw = 0
    cdef Py_ssize_t q
    for q in range(L + 2):
        if widths[q] > maxw:
            maxw = widths[q]
    cdef double[::1] z_new = np.empty(max(n, 1))
    cdef double[::1] dA = np.empty(max(n, 1))
    cdef double[::1] sub_out = np.empty(max(n, 1))
    cdef long[::1] idx = np.empty(max(n, 1), dtype=np.int_)
    cdef double[::1] act0 = np.empty(maxw)
    cdef double[::1] act1 = np.empty(maxw)
    cdef double half_alpha = 0.5 * alpha
    cdef double sse = 0.0, sse_new, old, new, delta, incv, r, ro, rn, log_ratio, s, z, a, w
    cdef double acc_sum_old, acc_sum_new
    cdef Py_ssize_t sw, c, k, l, i, j, p, m, rr, cc, col, nidx, t, rows, cols, base, nxt, rec = 0
    cdef bint refresh
    cdef double* cur
    cdef double* nx
    cdef double* tp
    with nogil:
        for p in range(n):
            r = Y[p] - out[p]
            sse += r * r
        for sw in range(n_sweeps):
            for c in range(n_coords):
                k = coords[c]
                l = coord_layer[k]
                i = coord_row[k]
                j = coord_col[k]
                old = theta[k]
                refresh = u_move[sw, c] < refresh_prob
                if refresh:
                    new = refresh_vals[sw, c]
                else:
                    new = old + scale[c] * normals[sw, c]
                delta = new - old
                nidx = 0
                if l == L:
                    sse_new = 0.0
                    for p in range(n):
                        if j == 0:
                            incv = delta
                        elif l == 0:
                            incv = delta * X[p, j - 1]
                        else:
                            incv = delta * A[p, hoff[l - 1] + j - 1]
                        sub_out[p] = out[p] + incv
                        r = Y[p] - sub_out[p]
                        sse_new += r * r
                else:
                    col = hoff[l] + i
                    for p in range(n):
                        if j == 0:
                            incv = delta
                        elif l == 0:
                            incv = delta * X[p, j - 1]
                        else:
                            incv = delta * A[p, hoff[l - 1] + j - 1]
                        z_new[p] = Z[p, col] + incv
                        a = z_new[p] if z_new[p] > 0.0 else 0.0
                        a = a - A[p, col]
                        if a != 0.0:
                            dA[nidx] = a
                            idx[nidx] = p
                            nidx += 1
                    nxt = l + 1
                    rows = widths[nxt + 1]
                    cols = widths[nxt]
                    acc_sum_old = 0.0
                    acc_sum_new = 0.0
                    for t in range(nidx):
                        p = idx[t]
                        if nxt == L:
                            sub_out[t] = out[p] + theta[toff[nxt] + 1 + i] * dA[t]
                        else:
                            cur = &act0[0]
                            nx = &act1[0]
                            for rr in range(rows):
                                z = Z[p, hoff[nxt] + rr] + dA[t] * theta[toff[nxt] + rr * (cols + 1) + 1 + i]
                                zbuf[p, hoff[nxt] + rr] = z
                                cur[rr] = z if z > 0.0 else 0.0
                            for m in range(nxt + 1, L + 1):
                                rows = widths[m + 1]
                                cols = widths[m]
                                for rr in range(rows):
                                    base = toff[m] + rr * (cols + 1)
                                    s = 0.0
                                    for cc in range(cols):
                                        s += theta[base + 1 + cc] * cur[cc]
                                    s += theta[base]
                                    if m < L:
                                        zbuf[p, hoff[m] + rr] = s
                                        nx[rr] = s if s > 0.0 else 0.0
                                    else:
                                        sub_out[t] = s
                                tp = cur
                                cur = nx
                                nx = tp
                            rows = widths[nxt + 1]
                            cols = widths[nxt]
                        ro = Y[p] - out[p]
                        rn = Y[p] - sub_out[t]
                        acc_sum_new += rn * rn
                        acc_sum_old += ro * ro
                    sse_new = sse + (acc_sum_new - acc_sum_old)
                log_ratio = -half_alpha * (sse_new - sse)
                if refresh:
                    try_ref[c] += 1
                else:
                    log_ratio += (_log_h_scaled(new, log_inv_sigma[k], family, nu, log_norm)
                                  - _log_h_scaled(old, log_inv_sigma[k], family, nu, log_norm))
                    try_rw[c] += 1
                if not (isfinite(sse_new) and log(u_acc[sw, c]) < log_ratio):
                    continue
                if refresh:
                    acc_ref[c] += 1
                else:
                    acc_rw[c] += 1
                theta[k] = new
                sse = sse_new
                if l == L:
                    for p in range(n):
                        out[p] = sub_out[p]
                    continue
                for p in range(n):
                    Z[p, col] = z_new[p]
                    A[p, col] = z_new[p] if z_new[p] > 0.0 else 0.0
                for t in range(nidx):
                    p = idx[t]
                    if l + 1 < L:
                        for cc in range(hoff[l + 1], Z.shape[1]):
                            Z[p, cc] = zbuf[p, cc]
                            A[p, cc] = zbuf[p, cc] if zbuf[p, cc] > 0.0 else 0.0
                    out[p] = sub_out[t]
            sse = 0.0
            for p in range(n):
                r = Y[p] - out[p]
                sse += r * r
            if (sw + 1) % thin == 0:
                for q in range(T):
                    samples[rec, q] = theta[q]
                sse_trace[rec] = sse
                rec += 1
    return sse
