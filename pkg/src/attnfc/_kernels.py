"""Compiled inner loops for the LSTM recurrence.

Gate rows in the stacked weight ``w4`` are ordered forget, input,
candidate, output. Both kernels are plain loops so the arithmetic order is
fixed and results are reproducible run to run.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def lstm_forward(w4, b4, h0, c0, xs):
    T, n = xs.shape
    m = h0.shape[0]
    k = m + n
    out = np.empty((T, 2, m))
    hxs = np.empty((T, k))
    acts = np.empty((T, 4 * m))
    tcs = np.empty((T, m))
    c_prev = c0.copy()
    h_prev = h0.copy()
    for t in range(T):
        for j in range(m):
            hxs[t, j] = h_prev[j]
        for j in range(n):
            hxs[t, m + j] = xs[t, j]
        for r in range(4 * m):
            z = b4[r]
            for j in range(k):
                z += w4[r, j] * hxs[t, j]
            if 2 * m <= r < 3 * m:
                acts[t, r] = math.tanh(z)
            else:
                acts[t, r] = _sigmoid(z)
        for j in range(m):
            c = acts[t, j] * c_prev[j] + acts[t, m + j] * acts[t, 2 * m + j]
            tc = math.tanh(c)
            tcs[t, j] = tc
            h = acts[t, 3 * m + j] * tc
            out[t, 0, j] = h
            out[t, 1, j] = c
            h_prev[j] = h
            c_prev[j] = c
    return out, hxs, acts, tcs


@njit(cache=True)
def lstm_backward(w4, c0, out, hxs, acts, tcs, grad):
    """Backpropagation through time for :func:`lstm_forward`.

    Returns gradients for ``(xs, h0, c0, w4, b4)``.
    """
    T = out.shape[0]
    m = c0.shape[0]
    k = hxs.shape[1]
    dxs = np.empty((T, k - m))
    dw4 = np.zeros((4 * m, k))
    db4 = np.zeros(4 * m)
    dh = np.zeros(m)
    dc = np.zeros(m)
    dz = np.empty(4 * m)
    dhx = np.empty(k)
    for t in range(T - 1, -1, -1):
        for j in range(m):
            c_prev = out[t - 1, 1, j] if t > 0 else c0[j]
            f = acts[t, j]
            i = acts[t, m + j]
            g = acts[t, 2 * m + j]
            o = acts[t, 3 * m + j]
            tc = tcs[t, j]
            gh = grad[t, 0, j] + dh[j]
            gc = grad[t, 1, j] + dc[j] + gh * o * (1.0 - tc * tc)
            dz[j] = gc * c_prev * f * (1.0 - f)
            dz[m + j] = gc * g * i * (1.0 - i)
            dz[2 * m + j] = gc * i * (1.0 - g * g)
            dz[3 * m + j] = gh * tc * o * (1.0 - o)
            dc[j] = gc * f
        for j in range(k):
            dhx[j] = 0.0
        for r in range(4 * m):
            d = dz[r]
            db4[r] += d
            for j in range(k):
                dw4[r, j] += d * hxs[t, j]
                dhx[j] += w4[r, j] * d
        for j in range(m):
            dh[j] = dhx[j]
        for j in range(k - m):
            dxs[t, j] = dhx[m + j]
    return dxs, dh, dc, dw4, db4
