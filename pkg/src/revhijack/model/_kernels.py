"""Inner loops of the twin encoders.

Each kernel has a numba ``@njit`` build and a pure-numpy build with identical
signatures.  The numba build is used when numba imports and the environment
variable ``REVHIJACK_NUMBA`` is not set to ``0``/``false``/``off``; the choice is
made once, at import time.  ``benchmarks/bench_kernels.py`` times both paths.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is optional
    numba = None

USE_NUMBA = numba is not None and os.environ.get("REVHIJACK_NUMBA", "1").strip().lower() not in {
    "0", "false", "off", "no"
}


# -- numpy builds -----------------------------------------------------------

def _sigmoid_np(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def pool_mean_numpy(ids, offsets, emb):
    """Row b = mean of emb[ids[offsets[b]:offsets[b+1]]]; empty segments give zeros."""
    n = len(offsets) - 1
    out = np.zeros((n, emb.shape[1]))
    lens = np.diff(offsets)
    nz = lens > 0
    if ids.size:
        sums = np.add.reduceat(emb[ids], offsets[:-1][nz], axis=0)
        out[nz] = sums / lens[nz, None]
    return out


def pool_mean_backward_numpy(ids, offsets, d_out, d_emb):
    """Scatter-add the mean-pool gradient into ``d_emb`` in place."""
    lens = np.diff(offsets)
    if not ids.size:
        return
    rows = np.repeat(np.arange(len(lens)), lens)
    scale = np.repeat(1.0 / np.maximum(lens, 1), lens)
    np.add.at(d_emb, ids, d_out[rows] * scale[:, None])


def lstm_forward_numpy(x, wx, wh, b):
    """One LSTM layer over one sequence; gate order (input, forget, output, candidate).

    Returns hidden states and cell states with a leading zero initial row, and the
    activated gates per step.
    """
    steps = x.shape[0]
    hid = wh.shape[0]
    hs = np.zeros((steps + 1, hid))
    cs = np.zeros((steps + 1, hid))
    gates = np.zeros((steps, 4 * hid))
    xw = x @ wx + b
    for t in range(steps):
        a = xw[t] + hs[t] @ wh
        i = _sigmoid_np(a[:hid])
        f = _sigmoid_np(a[hid:2 * hid])
        o = _sigmoid_np(a[2 * hid:3 * hid])
        g = np.tanh(a[3 * hid:])
        c = f * cs[t] + i * g
        cs[t + 1] = c
        hs[t + 1] = o * np.tanh(c)
        gates[t, :hid] = i
        gates[t, hid:2 * hid] = f
        gates[t, 2 * hid:3 * hid] = o
        gates[t, 3 * hid:] = g
    return hs, cs, gates


def lstm_backward_numpy(x, wx, wh, hs, cs, gates, d_h):
    """Backprop through time; ``d_h[t]`` is the loss gradient on hidden state t+1."""
    steps = x.shape[0]
    hid = wh.shape[0]
    d_x = np.zeros_like(x)
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros(4 * hid)
    dh_next = np.zeros(hid)
    dc_next = np.zeros(hid)
    da = np.zeros(4 * hid)
    for t in range(steps - 1, -1, -1):
        i = gates[t, :hid]
        f = gates[t, hid:2 * hid]
        o = gates[t, 2 * hid:3 * hid]
        g = gates[t, 3 * hid:]
        tc = np.tanh(cs[t + 1])
        dh = d_h[t] + dh_next
        dc = dh * o * (1.0 - tc * tc) + dc_next
        da[:hid] = dc * g * i * (1.0 - i)
        da[hid:2 * hid] = dc * cs[t] * f * (1.0 - f)
        da[2 * hid:3 * hid] = dh * tc * o * (1.0 - o)
        da[3 * hid:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        d_wx += np.outer(x[t], da)
        d_wh += np.outer(hs[t], da)
        d_b += da
        d_x[t] = wx @ da
        dh_next = wh @ da
    return d_x, d_wx, d_wh, d_b


# -- numba builds -------------------------------------------------------------

if USE_NUMBA:
    _njit = numba.njit(cache=True, fastmath=False)

    @_njit
    def _pool_mean_nb(ids, offsets, emb):
        n = offsets.shape[0] - 1
        d = emb.shape[1]
        out = np.zeros((n, d))
        for b in range(n):
            lo, hi = offsets[b], offsets[b + 1]
            if hi == lo:
                continue
            for k in range(lo, hi):
                row = ids[k]
                for j in range(d):
                    out[b, j] += emb[row, j]
            inv = 1.0 / (hi - lo)
            for j in range(d):
                out[b, j] *= inv
        return out

    @_njit
    def _pool_mean_backward_nb(ids, offsets, d_out, d_emb):
        n = offsets.shape[0] - 1
        d = d_emb.shape[1]
        for b in range(n):
            lo, hi = offsets[b], offsets[b + 1]
            if hi == lo:
                continue
            inv = 1.0 / (hi - lo)
            for k in range(lo, hi):
                row = ids[k]
                for j in range(d):
                    d_emb[row, j] += d_out[b, j] * inv

    @_njit
    def _sig(v):
        return 0.5 * (1.0 + np.tanh(0.5 * v))

    @_njit
    def _lstm_forward_nb(x, wx, wh, b):
        steps = x.shape[0]
        hid = wh.shape[0]
        hs = np.zeros((steps + 1, hid))
        cs = np.zeros((steps + 1, hid))
        gates = np.zeros((steps, 4 * hid))
        xw = x @ wx
        for t in range(steps):
            a = xw[t] + b + hs[t] @ wh
            for j in range(hid):
                i = _sig(a[j])
                f = _sig(a[hid + j])
                o = _sig(a[2 * hid + j])
                g = np.tanh(a[3 * hid + j])
                c = f * cs[t, j] + i * g
                cs[t + 1, j] = c
                hs[t + 1, j] = o * np.tanh(c)
                gates[t, j] = i
                gates[t, hid + j] = f
                gates[t, 2 * hid + j] = o
                gates[t, 3 * hid + j] = g
        return hs, cs, gates

    @_njit
    def _lstm_backward_nb(x, wx, wh, hs, cs, gates, d_h):
        steps = x.shape[0]
        hid = wh.shape[0]
        d_x = np.zeros_like(x)
        d_wx = np.zeros_like(wx)
        d_wh = np.zeros_like(wh)
        d_b = np.zeros(4 * hid)
        dh_next = np.zeros(hid)
        dc_next = np.zeros(hid)
        da = np.zeros(4 * hid)
        for t in range(steps - 1, -1, -1):
            for j in range(hid):
                i = gates[t, j]
                f = gates[t, hid + j]
                o = gates[t, 2 * hid + j]
                g = gates[t, 3 * hid + j]
                tc = np.tanh(cs[t + 1, j])
                dh = d_h[t, j] + dh_next[j]
                dc = dh * o * (1.0 - tc * tc) + dc_next[j]
                da[j] = dc * g * i * (1.0 - i)
                da[hid + j] = dc * cs[t, j] * f * (1.0 - f)
                da[2 * hid + j] = dh * tc * o * (1.0 - o)
                da[3 * hid + j] = dc * i * (1.0 - g * g)
                dc_next[j] = dc * f
            d_wx += np.outer(x[t], da)
            d_wh += np.outer(hs[t], da)
            d_b += da
            d_x[t] = wx @ da
            dh_next = wh @ da
        return d_x, d_wx, d_wh, d_b

    pool_mean = _pool_mean_nb
    pool_mean_backward = _pool_mean_backward_nb
    lstm_forward = _lstm_forward_nb
    lstm_backward = _lstm_backward_nb
else:
    pool_mean = pool_mean_numpy
    pool_mean_backward = pool_mean_backward_numpy
    lstm_forward = lstm_forward_numpy
    lstm_backward = lstm_backward_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"
