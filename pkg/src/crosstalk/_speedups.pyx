# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: LSTM recurrence (forward/backward) and scaled HMM
forward-backward. Same contracts as the numpy versions in ``kernels``;
matmuls go through BLAS dgemm, elementwise gate math is fused C loops.
"""

import numpy as np

from libc.math cimport exp, log, tanh
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sig(double x) nogil:
    return 1.0 / (1.0 + exp(-x))


cdef void _addmm(double* out, double* a, double* u, int b, int h, int h4) nogil:
    # row-major out(b, h4) += a(b, h) @ u(h, h4); column-major BLAS computes
    # the transposed product out^T = u^T @ a^T with the same memory.
    cdef char nt = b'N'
    cdef double one = 1.0
    dgemm(&nt, &nt, &h4, &b, &h, &one, u, &h4, a, &h, &one, out, &h4)


def lstm_forward(xg, U):
    xg = np.ascontiguousarray(xg, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t T = xg.shape[0], B = xg.shape[1], H4 = xg.shape[2]
    cdef Py_ssize_t H = H4 // 4
    if H4 != 4 * H or U.shape[0] != H or U.shape[1] != H4:
        raise ValueError("inconsistent kernel shapes")
    h_arr = np.empty((T, B, H))
    c_arr = np.empty((T, B, H))
    g_arr = np.empty((T, B, H4))
    cdef double[:, :, ::1] xgv = xg
    cdef double[:, ::1] uv = U
    cdef double[:, :, ::1] h = h_arr
    cdef double[:, :, ::1] c = c_arr
    cdef double[:, :, ::1] gates = g_arr
    cdef Py_ssize_t t, b, j
    cdef double i_, f_, g_, o_, cp
    if T == 0 or B == 0:
        return h_arr, c_arr, g_arr
    with nogil:
        for t in range(T):
            memcpy(&gates[t, 0, 0], &xgv[t, 0, 0], B * H4 * sizeof(double))
            if t > 0:
                _addmm(&gates[t, 0, 0], &h[t - 1, 0, 0], &uv[0, 0],
                       <int> B, <int> H, <int> H4)
            for b in range(B):
                for j in range(H):
                    i_ = _sig(gates[t, b, j])
                    f_ = _sig(gates[t, b, H + j])
                    g_ = tanh(gates[t, b, 2 * H + j])
                    o_ = _sig(gates[t, b, 3 * H + j])
                    cp = c[t - 1, b, j] if t > 0 else 0.0
                    gates[t, b, j] = i_
                    gates[t, b, H + j] = f_
                    gates[t, b, 2 * H + j] = g_
                    gates[t, b, 3 * H + j] = o_
                    c[t, b, j] = f_ * cp + i_ * g_
                    h[t, b, j] = o_ * tanh(c[t, b, j])
    return h_arr, c_arr, g_arr


def lstm_backward(dh_out, h, c, gates, U):
    dh_out = np.ascontiguousarray(dh_out, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    c = np.ascontiguousarray(c, dtype=np.float64)
    gates = np.ascontiguousarray(gates, dtype=np.float64)
    U = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t T = h.shape[0], B = h.shape[1], H = h.shape[2]
    cdef Py_ssize_t H4 = 4 * H
    dxg_arr = np.empty((T, B, H4))
    du_arr = np.zeros((H, H4))
    dh_arr = np.zeros((B, H))
    dc_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dho = dh_out
    cdef double[:, :, ::1] hv = h
    cdef double[:, :, ::1] cv = c
    cdef double[:, :, ::1] gv = gates
    cdef double[:, ::1] uv = U
    cdef double[:, :, ::1] dxg = dxg_arr
    cdef double[:, ::1] du = du_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dc = dc_arr
    cdef Py_ssize_t t, b, j
    cdef double i_, f_, g_, o_, tc, dh_, dct, cp
    cdef char nt = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    cdef int ib = <int> B, ih = <int> H, ih4 = <int> H4
    if T == 0 or B == 0:
        return dxg_arr, du_arr
    with nogil:
        for t in range(T - 1, -1, -1):
            for b in range(B):
                for j in range(H):
                    i_ = gv[t, b, j]
                    f_ = gv[t, b, H + j]
                    g_ = gv[t, b, 2 * H + j]
                    o_ = gv[t, b, 3 * H + j]
                    tc = tanh(cv[t, b, j])
                    dh_ = dh[b, j] + dho[t, b, j]
                    dct = dc[b, j] + dh_ * o_ * (1.0 - tc * tc)
                    cp = cv[t - 1, b, j] if t > 0 else 0.0
                    dxg[t, b, j] = dct * g_ * i_ * (1.0 - i_)
                    dxg[t, b, H + j] = dct * cp * f_ * (1.0 - f_)
                    dxg[t, b, 2 * H + j] = dct * i_ * (1.0 - g_ * g_)
                    dxg[t, b, 3 * H + j] = dh_ * tc * o_ * (1.0 - o_)
                    dc[b, j] = dct * f_
            if t > 0:
                # du(H, H4) += h[t-1]^T(H, B) @ dxg[t](B, H4)
                dgemm(&nt, &tt, &ih4, &ih, &ib, &one,
                      &dxg[t, 0, 0], &ih4, &hv[t - 1, 0, 0], &ih,
                      &one, &du[0, 0], &ih4)
                # dh(B, H) = dxg[t](B, H4) @ U^T(H4, H)
                dgemm(&tt, &nt, &ih, &ib, &ih4, &one,
                      &uv[0, 0], &ih4, &dxg[t, 0, 0], &ih4,
                      &zero, &dh[0, 0], &ih)
    return dxg_arr, du_arr


def hmm_forward_backward(loglik, double loop_prob):
    loglik = np.ascontiguousarray(loglik, dtype=np.float64)
    if loglik.ndim != 2:
        raise ValueError("loglik must be (T, S)")
    if not np.isfinite(loglik).all():
        raise ValueError("loglik must be finite")
    if not 0.0 < loop_prob < 1.0:
        raise ValueError("loop_prob must be inside (0, 1)")
    cdef Py_ssize_t T = loglik.shape[0], S = loglik.shape[1]
    if T == 0:
        return np.empty((0, S)), 0.0
    if S == 1:
        return np.ones((T, 1)), float(loglik.sum())
    cdef double q = (1.0 - loop_prob) / (S - 1)
    cdef double pq = loop_prob - q
    gamma_arr = np.empty((T, S))
    lik_arr = np.empty((T, S))
    beta_arr = np.empty(S)
    wrk_arr = np.empty(S)
    scale_arr = np.empty(T)
    cdef double[:, ::1] llv = loglik
    cdef double[:, ::1] gamma = gamma_arr
    cdef double[:, ::1] lik = lik_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] wrk = wrk_arr
    cdef double[::1] scale = scale_arr
    cdef Py_ssize_t t, s
    cdef double m, acc, total, wsum
    total = 0.0
    with nogil:
        for t in range(T):
            m = llv[t, 0]
            for s in range(1, S):
                if llv[t, s] > m:
                    m = llv[t, s]
            total += m
            for s in range(S):
                lik[t, s] = exp(llv[t, s] - m)
        # forward pass; gamma rows hold the per-frame normalized alphas
        acc = 0.0
        for s in range(S):
            gamma[0, s] = lik[0, s] / S
            acc += gamma[0, s]
        scale[0] = acc
        for s in range(S):
            gamma[0, s] /= acc
        for t in range(1, T):
            wsum = 0.0
            for s in range(S):
                wsum += gamma[t - 1, s]
            acc = 0.0
            for s in range(S):
                gamma[t, s] = lik[t, s] * (pq * gamma[t - 1, s] + q * wsum)
                acc += gamma[t, s]
            scale[t] = acc
            for s in range(S):
                gamma[t, s] /= acc
        for t in range(T):
            total += log(scale[t])
        # backward pass; beta is carried frame to frame, gamma is finished
        # in place as alpha * beta renormalized per frame
        for s in range(S):
            beta[s] = 1.0
        for t in range(T - 2, -1, -1):
            wsum = 0.0
            for s in range(S):
                wrk[s] = beta[s] * lik[t + 1, s]
                wsum += wrk[s]
            for s in range(S):
                beta[s] = (pq * wrk[s] + q * wsum) / scale[t + 1]
            acc = 0.0
            for s in range(S):
                gamma[t, s] *= beta[s]
                acc += gamma[t, s]
            for s in range(S):
                gamma[t, s] /= acc
    return gamma_arr, total
