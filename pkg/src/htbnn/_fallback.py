"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Both modules expose the same functions with the same argument lists; the
selection happens in :mod:`htbnn.kernels`.  Keep the arithmetic order in step
with the compiled code so that trajectories agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

NAME = "python"


def log_h_scaled(theta: float, log_inv_sigma: float, family: int, nu: float, log_norm: float,
                 custom=None) -> float:
    """log of h(theta * e^L) + L for the Student and Gaussian families."""
    if theta == 0.0:
        la = -math.inf
    else:
        la = math.log(abs(theta)) + log_inv_sigma
    if family == 0:
        s = 2.0 * la - math.log(nu)
        sp = s + math.log1p(math.exp(-s)) if s > 0 else math.log1p(math.exp(s))
        return log_norm - 0.5 * (nu + 1.0) * sp + log_inv_sigma
    if family == 1:
        x2 = math.exp(2.0 * la) if la < 350.0 else math.inf
        return -0.5 * math.log(2.0 * math.pi) - 0.5 * x2 + log_inv_sigma
    return float(custom(np.array(la))) + log_inv_sigma


def forward_cache(theta, widths, toff, hoff, X, Z, A, out):
    """Fill hidden pre-activations Z, activations A and outputs ``out``."""
    L = widths.shape[0] - 2
    a = X
    for l in range(L + 1):
        rows, cols = widths[l + 1], widths[l]
        block = theta[toff[l]:toff[l] + rows * (cols + 1)].reshape(rows, cols + 1)
        z = a @ block[:, 1:].T + block[:, 0]
        if l < L:
            Z[:, hoff[l]:hoff[l] + rows] = z
            a = np.maximum(z, 0.0)
            A[:, hoff[l]:hoff[l] + rows] = a
        else:
            out[:] = z[:, 0]


def forward_theta(theta, widths, toff, X):
    L = widths.shape[0] - 2
    a = X
    for l in range(L + 1):
        rows, cols = widths[l + 1], widths[l]
        block = theta[toff[l]:toff[l] + rows * (cols + 1)].reshape(rows, cols + 1)
        a = a @ block[:, 1:].T + block[:, 0]
        if l < L:
            a = np.maximum(a, 0.0)
    return a


def _downstream(theta, widths, toff, hoff, l, i, rows_idx, dA, Z, out, zbuf):
    """New outputs at ``rows_idx`` after activation i of hidden layer l moved by dA.

    Pre-activations of the later hidden layers are written into ``zbuf``.
    """
    L = widths.shape[0] - 2
    nxt = l + 1
    rows, cols = widths[nxt + 1], widths[nxt]
    block = theta[toff[nxt]:toff[nxt] + rows * (cols + 1)].reshape(rows, cols + 1)
    if nxt == L:
        return out[rows_idx] + block[0, 1 + i] * dA
    z = Z[rows_idx, hoff[nxt]:hoff[nxt] + rows] + np.outer(dA, block[:, 1 + i])
    zbuf[rows_idx, hoff[nxt]:hoff[nxt] + rows] = z
    a = np.maximum(z, 0.0)
    for m in range(nxt + 1, L + 1):
        rows, cols = widths[m + 1], widths[m]
        block = theta[toff[m]:toff[m] + rows * (cols + 1)].reshape(rows, cols + 1)
        z = a @ block[:, 1:].T + block[:, 0]
        if m < L:
            zbuf[rows_idx, hoff[m]:hoff[m] + rows] = z
            a = np.maximum(z, 0.0)
        else:
            return z[:, 0]
    raise AssertionError("unreachable")


def run_sweeps(theta, widths, toff, hoff, X, Y, Z, A, out,
               coord_layer, coord_row, coord_col, coords, scale, log_inv_sigma,
               u_move, normals, refresh_vals, u_acc,
               alpha, family, nu, log_norm, refresh_prob,
               acc_rw, try_rw, acc_ref, try_ref,
               thin, samples, sse_trace, zbuf, custom=None):
    """Componentwise Metropolis sweeps over ``coords``; returns the final SSE.

    Random inputs have shape (n_sweeps, len(coords)).  Every ``thin`` sweeps
    the full coefficient vector is stored in ``samples`` and the SSE in
    ``sse_trace``.
    """
    L = widths.shape[0] - 2
    n_sweeps = u_move.shape[0]
    half_alpha = 0.5 * alpha
    resid = Y - out
    sse = float(np.dot(resid, resid))
    rec = 0
    for s in range(n_sweeps):
        for c in range(coords.shape[0]):
            k = coords[c]
            l, i, j = coord_layer[k], coord_row[k], coord_col[k]
            old = theta[k]
            refresh = u_move[s, c] < refresh_prob
            new = refresh_vals[s, c] if refresh else old + scale[c] * normals[s, c]
            delta = new - old
            if j == 0:
                inc = None
            elif l == 0:
                inc = X[:, j - 1]
            else:
                inc = A[:, hoff[l - 1] + j - 1]
            step = delta if inc is None else delta * inc
            if l == L:
                out_new = out + step
                r = Y - out_new
                sse_new = float(np.dot(r, r))
                rows_idx = None
            else:
                col = hoff[l] + i
                z_new = Z[:, col] + step
                dA = np.maximum(z_new, 0.0) - A[:, col]
                rows_idx = np.flatnonzero(dA)
                sub_out = _downstream(theta, widths, toff, hoff, l, i, rows_idx, dA[rows_idx], Z, out, zbuf)
                r_old = Y[rows_idx] - out[rows_idx]
                r_new = Y[rows_idx] - sub_out
                sse_new = sse + float(np.dot(r_new, r_new) - np.dot(r_old, r_old))
            log_ratio = -half_alpha * (sse_new - sse)
            if not refresh:
                log_ratio += (log_h_scaled(new, log_inv_sigma[k], family, nu, log_norm, custom)
                              - log_h_scaled(old, log_inv_sigma[k], family, nu, log_norm, custom))
                try_rw[c] += 1
            else:
                try_ref[c] += 1
            if not (math.isfinite(sse_new) and math.log(u_acc[s, c]) < log_ratio):
                continue
            if refresh:
                acc_ref[c] += 1
            else:
                acc_rw[c] += 1
            theta[k] = new
            sse = sse_new
            if rows_idx is None:
                out[:] = out_new
                continue
            Z[:, col] = z_new
            A[:, col] = np.maximum(z_new, 0.0)
            if rows_idx.size:
                if l + 1 < L:
                    lo = hoff[l + 1]
                    Z[rows_idx, lo:] = zbuf[rows_idx, lo:]
                    A[rows_idx, lo:] = np.maximum(zbuf[rows_idx, lo:], 0.0)
                out[rows_idx] = sub_out
        # incremental sums drift; refresh once per sweep
        resid = Y - out
        sse = float(np.dot(resid, resid))
        if (s + 1) % thin == 0:
            samples[rec, :] = theta
            sse_trace[rec] = sse
            rec += 1
    return sse
