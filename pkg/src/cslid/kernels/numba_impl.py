"""numba-compiled kernels.  Same contracts as :mod:`cslid.kernels.numpy_impl`."""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lse2(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def _can_skip(ext, s, blank):
    return s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]


@njit(cache=True)
def ctc_alpha(log_probs, ext, blank):
    T = log_probs.shape[0]
    S = ext.shape[0]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            acc = alpha[t - 1, s]
            if s >= 1:
                acc = _lse2(acc, alpha[t - 1, s - 1])
            if _can_skip(ext, s, blank):
                acc = _lse2(acc, alpha[t - 1, s - 2])
            if acc != NEG_INF:
                alpha[t, s] = acc + log_probs[t, ext[s]]
    return alpha


@njit(cache=True)
def ctc_beta(log_probs, ext, blank):
    T = log_probs.shape[0]
    S = ext.shape[0]
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            acc = beta[t + 1, s]
            if s + 1 < S:
                acc = _lse2(acc, beta[t + 1, s + 1])
            if s + 2 < S and _can_skip(ext, s + 2, blank):
                acc = _lse2(acc, beta[t + 1, s + 2])
            if acc != NEG_INF:
                beta[t, s] = acc + log_probs[t, ext[s]]
    return beta


@njit(cache=True)
def ctc_viterbi(log_probs, ext, blank):
    T = log_probs.shape[0]
    S = ext.shape[0]
    delta = np.full((T, S), NEG_INF)
    back = np.zeros((T, S), dtype=np.int64)
    delta[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        delta[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            best = delta[t - 1, s]
            step = 0
            if s >= 1 and delta[t - 1, s - 1] > best:
                best = delta[t - 1, s - 1]
                step = 1
            if _can_skip(ext, s, blank) and delta[t - 1, s - 2] > best:
                best = delta[t - 1, s - 2]
                step = 2
            delta[t, s] = best + log_probs[t, ext[s]]
            back[t, s] = step
    s = S - 1
    if S > 1 and delta[T - 1, S - 2] > delta[T - 1, S - 1]:
        s = S - 2
    score = delta[T - 1, s]
    symbols = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        symbols[t] = ext[s]
        s -= back[t, s]
    return symbols, score


@njit(cache=True)
def ema_scan(z, decay, reverse):
    T, H = z.shape
    out = np.empty_like(z)
    acc = np.zeros(H, dtype=z.dtype)
    gain = 1.0 - decay
    for i in range(T):
        t = T - 1 - i if reverse else i
        for h in range(H):
            acc[h] = decay * acc[h] + gain * z[t, h]
            out[t, h] = acc[h]
    return out
