"""Numerical kernels: LSTM recurrence against a scalar oracle, kernel-level
gradients against central differences, forward-backward against brute-force
path enumeration, and compiled/numpy backend equivalence."""

import itertools

import numpy as np
import pytest

from crosstalk import kernels
from crosstalk.kernels import (
    BACKENDS,
    active_backend,
    hmm_forward_backward_np,
    lstm_backward_np,
    lstm_forward_np,
)

HAS_COMPILED = "compiled" in BACKENDS

needs_compiled = pytest.mark.skipif(not HAS_COMPILED,
                                    reason="compiled extension not built")


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def _scalar_lstm(xg, U):
    """Element-by-element LSTM recurrence, no matrix ops."""
    T, B, H4 = xg.shape
    H = H4 // 4
    h = np.zeros((T, B, H))
    c = np.zeros((T, B, H))
    for b in range(B):
        h_prev = [0.0] * H
        c_prev = [0.0] * H
        for t in range(T):
            pre = [xg[t, b, k] + sum(h_prev[j] * U[j, k] for j in range(H))
                   for k in range(H4)]
            for u in range(H):
                i = _sigmoid(pre[u])
                f = _sigmoid(pre[H + u])
                g = np.tanh(pre[2 * H + u])
                o = _sigmoid(pre[3 * H + u])
                c_new = f * c_prev[u] + i * g
                c[t, b, u] = c_new
                h[t, b, u] = o * np.tanh(c_new)
            c_prev = list(c[t, b])
            h_prev = list(h[t, b])
    return h, c


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_lstm_forward_matches_scalar_oracle(name):
    rng = np.random.default_rng(5)
    T, B, H = 4, 2, 3
    xg = rng.standard_normal((T, B, 4 * H))
    U = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
    h, c, gates = BACKENDS[name][0](xg, U)
    h_ref, c_ref = _scalar_lstm(xg, U)
    assert np.allclose(h, h_ref, atol=1e-12)
    assert np.allclose(c, c_ref, atol=1e-12)
    # stored gates reproduce the state recurrence
    i, f = gates[..., :H], gates[..., H:2 * H]
    g, o = gates[..., 2 * H:3 * H], gates[..., 3 * H:]
    c_prev = np.concatenate([np.zeros((1, B, H)), c[:-1]], axis=0)
    assert np.allclose(c, f * c_prev + i * g, atol=1e-12)
    assert np.allclose(h, o * np.tanh(c), atol=1e-12)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_lstm_backward_matches_central_differences(name):
    rng = np.random.default_rng(6)
    T, B, H = 3, 2, 2
    xg = rng.standard_normal((T, B, 4 * H))
    U = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
    weight = rng.standard_normal((T, B, H))
    forward, backward = BACKENDS[name][0], BACKENDS[name][1]

    def loss(xg_, U_):
        h, _, _ = forward(xg_, U_)
        return float((h * weight).sum())

    h, c, gates = forward(xg, U)
    dxg, dU = backward(weight, h, c, gates, U)

    eps = 1e-6
    for arr, grad in ((xg, np.asarray(dxg)), (U, np.asarray(dU))):
        flat, gflat = arr.ravel(), grad.ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss(xg, U)
            flat[k] = orig - eps
            down = loss(xg, U)
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            assert abs(numeric - gflat[k]) < 1e-7 * max(1.0, abs(numeric))


def _brute_force_posteriors(loglik, loop_prob):
    """Exact state posteriors by summing over every path."""
    T, S = loglik.shape
    lik = np.exp(loglik)
    gamma = np.zeros((T, S))
    total = 0.0
    for path in itertools.product(range(S), repeat=T):
        p = 1.0 / S * lik[0, path[0]]
        for t in range(1, T):
            if S == 1:
                trans = 1.0
            elif path[t] == path[t - 1]:
                trans = loop_prob
            else:
                trans = (1.0 - loop_prob) / (S - 1)
            p *= trans * lik[t, path[t]]
        total += p
        for t, s in enumerate(path):
            gamma[t, s] += p
    return gamma / total, np.log(total)


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_forward_backward_matches_path_enumeration(name):
    rng = np.random.default_rng(7)
    fb = BACKENDS[name][2]
    for _ in range(20):
        S = int(rng.integers(1, 4))
        T = int(rng.integers(1, 9))
        loglik = rng.normal(0.0, 2.0, size=(T, S))
        loop = float(rng.uniform(0.55, 0.99)) if S > 1 else 0.9
        gamma, total = fb(loglik, loop)
        gamma_ref, total_ref = _brute_force_posteriors(loglik, loop)
        assert np.allclose(gamma, gamma_ref, atol=1e-10)
        assert abs(total - total_ref) < 1e-10 * max(1.0, abs(total_ref))


def test_forward_backward_rows_stochastic():
    rng = np.random.default_rng(8)
    gamma, _ = hmm_forward_backward_np(rng.normal(size=(50, 4)), 0.95)
    assert np.allclose(gamma.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(gamma >= 0)


def test_forward_backward_shift_invariance():
    # adding a per-frame constant to every state's log-likelihood leaves
    # the posteriors unchanged and shifts the total by the constants' sum
    rng = np.random.default_rng(9)
    loglik = rng.normal(size=(30, 3))
    shifts = rng.normal(scale=50.0, size=30)
    gamma, total = hmm_forward_backward_np(loglik, 0.95)
    gamma2, total2 = hmm_forward_backward_np(loglik + shifts[:, None], 0.95)
    assert np.allclose(gamma, gamma2, atol=1e-9)
    assert np.isclose(total2, total + shifts.sum(), rtol=1e-12)


def test_forward_backward_validation():
    with pytest.raises(ValueError):
        hmm_forward_backward_np(np.zeros((3, 2)), 1.0)
    with pytest.raises(ValueError):
        hmm_forward_backward_np(np.full((3, 2), np.nan), 0.9)
    with pytest.raises(ValueError):
        hmm_forward_backward_np(np.zeros(3), 0.9)


def test_single_state_chain():
    loglik = np.array([[-1.0], [-2.0], [-3.0]])
    gamma, total = hmm_forward_backward_np(loglik, 0.95)
    assert np.array_equal(gamma, np.ones((3, 1)))
    assert total == -6.0


@needs_compiled
def test_backends_agree_lstm():
    rng = np.random.default_rng(10)
    for _ in range(5):
        T = int(rng.integers(1, 12))
        B = int(rng.integers(1, 5))
        H = int(rng.integers(1, 9))
        xg = rng.standard_normal((T, B, 4 * H))
        U = rng.standard_normal((H, 4 * H)) / np.sqrt(H)
        dh_out = rng.standard_normal((T, B, H))
        h_np, c_np, g_np = lstm_forward_np(xg, U)
        h_cy, c_cy, g_cy = BACKENDS["compiled"][0](xg, U)
        assert np.allclose(h_np, h_cy, atol=1e-13)
        assert np.allclose(c_np, c_cy, atol=1e-13)
        assert np.allclose(g_np, g_cy, atol=1e-13)
        dxg_np, dU_np = lstm_backward_np(dh_out, h_np, c_np, g_np, U)
        dxg_cy, dU_cy = BACKENDS["compiled"][1](dh_out, np.asarray(h_cy),
                                                np.asarray(c_cy),
                                                np.asarray(g_cy), U)
        assert np.allclose(dxg_np, dxg_cy, atol=1e-12)
        assert np.allclose(dU_np, dU_cy, atol=1e-12)


@needs_compiled
def test_backends_agree_forward_backward():
    rng = np.random.default_rng(11)
    for _ in range(5):
        T = int(rng.integers(1, 40))
        S = int(rng.integers(2, 6))
        loglik = rng.normal(scale=3.0, size=(T, S))
        g_np, t_np = hmm_forward_backward_np(loglik, 0.95)
        g_cy, t_cy = BACKENDS["compiled"][2](loglik, 0.95)
        assert np.allclose(g_np, g_cy, atol=1e-13)
        assert np.isclose(t_np, t_cy, rtol=1e-13)


def test_active_backend_registered():
    assert active_backend() in BACKENDS
    assert kernels.lstm_forward is BACKENDS[active_backend()][0]
