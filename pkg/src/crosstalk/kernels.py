"""Hot numerical kernels with a compiled fast path.

Two implementations of each kernel exist: a compiled Cython extension
(``crosstalk._speedups``) and a pure-numpy fallback. The compiled path is
used when the extension imported successfully and the environment variable
``CROSSTALK_PURE_PYTHON`` is unset/empty; both compute the same thing to
floating-point roundoff.

Kernels
-------
lstm_forward(xg, U)
    One LSTM direction over a batch. ``xg`` is the precomputed input
    projection ``x_t @ Wx + b`` with shape (T, B, 4H); ``U`` is the
    recurrent weight (H, 4H). Gate block order along the last axis is
    [input, forget, cell, output]. Returns ``(h, c, gates)`` where ``gates``
    holds post-activation gate values (needed for the backward pass).
lstm_backward(dh_out, h, c, gates, U)
    Reverse-mode pass matching ``lstm_forward``. ``dh_out`` is the loss
    gradient w.r.t. each ``h_t``. Returns ``(dxg, dU)``; gradients w.r.t.
    ``Wx``/``b``/inputs follow from ``dxg`` outside the kernel.
hmm_forward_backward(loglik, loop_prob)
    Scaled forward-backward smoothing for an S-state chain with uniform
    initial distribution and transition matrix ``loop_prob`` on the diagonal
    and ``(1 - loop_prob)/(S - 1)`` elsewhere. Takes per-frame state
    log-likelihoods (T, S); returns ``(posteriors, total_log_likelihood)``.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "lstm_forward",
    "lstm_backward",
    "hmm_forward_backward",
    "active_backend",
    "BACKENDS",
]


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward_np(xg, U):
    xg = np.ascontiguousarray(xg, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    T, B, H4 = xg.shape
    H = H4 // 4
    if H4 != 4 * H or U.shape != (H, H4):
        raise ValueError("inconsistent kernel shapes")
    h = np.empty((T, B, H))
    c = np.empty((T, B, H))
    gates = np.empty((T, B, H4))
    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        pre = xg[t] + h_prev @ U
        i = _sigmoid(pre[:, :H])
        f = _sigmoid(pre[:, H:2 * H])
        g = np.tanh(pre[:, 2 * H:3 * H])
        o = _sigmoid(pre[:, 3 * H:])
        c_prev = f * c_prev + i * g
        h_prev = o * np.tanh(c_prev)
        gates[t, :, :H] = i
        gates[t, :, H:2 * H] = f
        gates[t, :, 2 * H:3 * H] = g
        gates[t, :, 3 * H:] = o
        c[t] = c_prev
        h[t] = h_prev
    return h, c, gates


def lstm_backward_np(dh_out, h, c, gates, U):
    dh_out = np.ascontiguousarray(dh_out, dtype=np.float64)
    T, B, H = h.shape
    H4 = 4 * H
    dxg = np.empty((T, B, H4))
    dU = np.zeros_like(U)
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        i = gates[t, :, :H]
        f = gates[t, :, H:2 * H]
        g = gates[t, :, 2 * H:3 * H]
        o = gates[t, :, 3 * H:]
        tc = np.tanh(c[t])
        dh = dh + dh_out[t]
        dct = dc + dh * o * (1.0 - tc * tc)
        c_prev = c[t - 1] if t > 0 else 0.0
        dxg[t, :, :H] = dct * g * i * (1.0 - i)
        dxg[t, :, H:2 * H] = dct * c_prev * f * (1.0 - f)
        dxg[t, :, 2 * H:3 * H] = dct * i * (1.0 - g * g)
        dxg[t, :, 3 * H:] = dh * tc * o * (1.0 - o)
        if t > 0:
            dU += h[t - 1].T @ dxg[t]
        dh = dxg[t] @ U.T
        dc = dct * f
    return dxg, dU


def hmm_forward_backward_np(loglik, loop_prob):
    loglik = np.ascontiguousarray(loglik, dtype=np.float64)
    if loglik.ndim != 2:
        raise ValueError("loglik must be (T, S)")
    if not np.isfinite(loglik).all():
        raise ValueError("loglik must be finite")
    if not 0.0 < loop_prob < 1.0:
        raise ValueError("loop_prob must be inside (0, 1)")
    T, S = loglik.shape
    if T == 0:
        return np.empty((0, S)), 0.0
    if S == 1:
        return np.ones((T, 1)), float(loglik.sum())
    q = (1.0 - loop_prob) / (S - 1)
    pq = loop_prob - q
    shift = loglik.max(axis=1)
    lik = np.exp(loglik - shift[:, None])
    alpha = np.empty((T, S))
    scale = np.empty(T)
    a = lik[0] / S
    scale[0] = a.sum()
    alpha[0] = a / scale[0]
    for t in range(1, T):
        pred = pq * alpha[t - 1] + q * alpha[t - 1].sum()
        a = lik[t] * pred
        scale[t] = a.sum()
        alpha[t] = a / scale[t]
    beta = np.empty((T, S))
    beta[T - 1] = 1.0
    for t in range(T - 2, -1, -1):
        w = beta[t + 1] * lik[t + 1]
        beta[t] = (pq * w + q * w.sum()) / scale[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    total = float(np.log(scale).sum() + shift.sum())
    return gamma, total


try:
    from . import _speedups as _ext
except ImportError:  # extension not built; fall back to numpy
    _ext = None

_PURE = bool(os.environ.get("CROSSTALK_PURE_PYTHON"))

BACKENDS = {
    "numpy": (lstm_forward_np, lstm_backward_np, hmm_forward_backward_np),
}
if _ext is not None:
    BACKENDS["compiled"] = (
        _ext.lstm_forward,
        _ext.lstm_backward,
        _ext.hmm_forward_backward,
    )

_ACTIVE = "compiled" if (_ext is not None and not _PURE) else "numpy"
lstm_forward, lstm_backward, hmm_forward_backward = BACKENDS[_ACTIVE]


def active_backend() -> str:
    """Name of the kernel backend selected at import: 'compiled' or 'numpy'."""
    return _ACTIVE
