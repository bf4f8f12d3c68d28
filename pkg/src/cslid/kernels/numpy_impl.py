"""Pure-numpy kernels, vectorised over CTC states / hidden units.

Used when numba is unavailable or ``CSLID_DISABLE_NUMBA=1``.  Results agree
with :mod:`cslid.kernels.numba_impl` to floating-point round-off.
"""

import numpy as np

NEG_INF = -np.inf


def _skip_allowed(ext, blank):
    skip = np.zeros(ext.shape[0], dtype=bool)
    if ext.shape[0] > 2:
        skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    return skip


def ctc_alpha(log_probs, ext, blank):
    """Forward variables log alpha[t, s] over the blank-extended label ``ext``."""
    T = log_probs.shape[0]
    S = ext.shape[0]
    skip = _skip_allowed(ext, blank)
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    shifted1 = np.full(S, NEG_INF)
    shifted2 = np.full(S, NEG_INF)
    for t in range(1, T):
        prev = alpha[t - 1]
        shifted1[1:] = prev[:-1]
        shifted2[2:] = prev[:-2]
        s2 = np.where(skip, shifted2, NEG_INF)
        alpha[t] = np.logaddexp(np.logaddexp(prev, shifted1), s2) + log_probs[t, ext]
    return alpha


def ctc_beta(log_probs, ext, blank):
    """Backward variables log beta[t, s]; beta includes the emission at t."""
    T = log_probs.shape[0]
    S = ext.shape[0]
    skip = _skip_allowed(ext, blank)
    # transition s -> s+2 is allowed iff skip[s+2]
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    shifted1 = np.full(S, NEG_INF)
    shifted2 = np.full(S, NEG_INF)
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        shifted1[:-1] = nxt[1:]
        shifted2[:-2] = nxt[2:]
        s2 = np.where(skip_from, shifted2, NEG_INF)
        beta[t] = np.logaddexp(np.logaddexp(nxt, shifted1), s2) + log_probs[t, ext]
    return beta


def ctc_viterbi(log_probs, ext, blank):
    """Most probable state path through the CTC lattice.

    Returns ``(symbols, score)`` where ``symbols[t]`` is the alphabet index
    emitted at frame t and ``score`` its summed log-probability.
    """
    T = log_probs.shape[0]
    S = ext.shape[0]
    skip = _skip_allowed(ext, blank)
    delta = np.full((T, S), NEG_INF)
    back = np.zeros((T, S), dtype=np.int64)
    delta[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        delta[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        prev = delta[t - 1]
        cand = np.full((3, S), NEG_INF)
        cand[0] = prev
        cand[1, 1:] = prev[:-1]
        cand[2, 2:] = np.where(skip[2:], prev[:-2], NEG_INF)
        step = np.argmax(cand, axis=0)  # first max wins: stay before advance
        delta[t] = cand[step, np.arange(S)] + log_probs[t, ext]
        back[t] = step
    if S > 1 and delta[T - 1, S - 2] > delta[T - 1, S - 1]:
        s = S - 2
    else:
        s = S - 1
    score = delta[T - 1, s]
    states = np.empty(T, dtype=np.int64)
    for t in range(T - 1, -1, -1):
        states[t] = s
        s -= back[t, s]
    return ext[states], score


def ema_scan(z, decay, reverse):
    """Exponential moving average along axis 0.

    forward:  h[t] = decay * h[t-1] + (1 - decay) * z[t], h[-1] = 0
    reverse:  the same recursion run from the last frame backwards.

    The adjoint of a forward scan is the reverse scan (and vice versa),
    which is what backpropagation uses.
    """
    T = z.shape[0]
    out = np.empty_like(z)
    acc = np.zeros(z.shape[1:], dtype=z.dtype)
    gain = 1.0 - decay
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        acc = decay * acc + gain * z[t]
        out[t] = acc
    return out
