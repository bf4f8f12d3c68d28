"""Connectionist temporal classification: loss, gradient and decoders.

All arithmetic is in the log domain.  Label sequences are tuples of alphabet
indices; index 0 is the blank.  The exhaustive-enumeration oracles at the
bottom of the module exist for testing and refuse anything larger than
``|alphabet| ** T`` with T <= 10 and |alphabet| <= 5.
"""

import math
from dataclasses import dataclass, field
from itertools import groupby

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .errors import InfeasibleTargetError, InvalidParameterError, OracleTooLargeError
from .labels import LabelAlphabet

BLANK = 0
NEG_INF = -math.inf


@dataclass(frozen=True)
class CtcAlphabet:
    """Output symbols; ``symbols[0]`` is the blank.

    The default layout is ``[blank, apostrophe, native, english, silence]``.
    """

    symbols: tuple = ("-", "′", "G", "E", "S")
    blank_index: int = 0

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise InvalidParameterError("a CTC alphabet needs at least blank + one symbol")
        if self.blank_index != 0:
            raise InvalidParameterError("blank must be index 0")
        if len(set(self.symbols)) != len(self.symbols):
            raise InvalidParameterError(f"duplicate symbols in {self.symbols}")

    @classmethod
    def from_labels(cls, alphabet=None, blank_symbol="-"):
        a = alphabet or LabelAlphabet()
        return cls((blank_symbol, a.apostrophe_char, a.native_char, a.english_char, a.silence_char))

    @property
    def size(self):
        return len(self.symbols)

    def __len__(self):
        return len(self.symbols)

    def index(self, symbol):
        return self.symbols.index(symbol)

    def encode(self, text):
        """Map a string of symbols to indices (blank not allowed)."""
        out = []
        for ch in text:
            i = self.symbols.index(ch)
            if i == self.blank_index:
                raise InvalidParameterError("targets may not contain the blank symbol")
            out.append(i)
        return tuple(out)

    def decode(self, labels):
        return "".join(self.symbols[i] for i in labels)


@dataclass(frozen=True)
class EmissionMatrix:
    """Per-frame log posteriors, shape ``(T, |alphabet|)``; rows log-sum-exp to 0."""

    log_probs: np.ndarray

    def __post_init__(self):
        lp = np.array(self.log_probs, dtype=np.float64)
        if lp.ndim != 2 or lp.shape[0] < 1 or lp.shape[1] < 2:
            raise InvalidParameterError(f"emission matrix must be (T>=1, K>=2), got {lp.shape}")
        if np.any(np.isnan(lp)) or np.any(lp == np.inf):
            raise InvalidParameterError("emission entries must be finite or -inf")
        row = logsumexp(lp, axis=1)
        if np.any(np.abs(row) > 1e-6):
            raise InvalidParameterError(f"rows must be normalised log distributions (max |lse| = {np.max(np.abs(row)):.3g})")
        lp.setflags(write=False)
        object.__setattr__(self, "log_probs", lp)

    @classmethod
    def from_logits(cls, logits):
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits - logsumexp(logits, axis=1, keepdims=True))

    @property
    def T(self):
        return self.log_probs.shape[0]

    @property
    def n_symbols(self):
        return self.log_probs.shape[1]


@dataclass(frozen=True)
class DecodeResult:
    labels: tuple
    log_prob: float
    frame_path: np.ndarray = field(default=None, compare=False)
    sequence: str = ""


def _lse(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def _as_log_probs(e):
    return e.log_probs if isinstance(e, EmissionMatrix) else np.asarray(e, dtype=np.float64)


def extend_with_blanks(target, blank=BLANK):
    ext = np.full(2 * len(target) + 1, blank, dtype=np.int64)
    ext[1::2] = target
    return ext


def min_frames(target):
    """Fewest frames that can emit ``target``: one per label plus a blank between repeats."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _check_target(target, n_symbols, blank=BLANK):
    target = tuple(int(c) for c in target)
    for c in target:
        if c == blank or not 0 <= c < n_symbols:
            raise InvalidParameterError(f"target symbol {c} is not a non-blank alphabet index")
    return target


def sequence_log_prob(e, labels):
    """log P(labels | x): the CTC forward pass (empty ``labels`` allowed)."""
    lp = _as_log_probs(e)
    labels = _check_target(labels, lp.shape[1])
    if min_frames(labels) > lp.shape[0]:
        return NEG_INF
    ext = extend_with_blanks(labels)
    alpha = kernels.ctc_alpha(lp, ext)
    return float(logsumexp(alpha[-1, -2:])) if len(ext) > 1 else float(alpha[-1, 0])


def ctc_loss(e, target):
    """Negative log-likelihood of ``target`` and its gradient w.r.t. the log-probs.

    The gradient is the partial derivative with every entry of the log-prob
    matrix treated as an independent input: ``-occupancy[t, k]``.  For the
    gradient w.r.t. pre-softmax logits use :func:`logit_gradient`.
    Raises :class:`InfeasibleTargetError` when ``target`` needs more frames
    than are available.
    """
    lp = _as_log_probs(e)
    target = _check_target(target, lp.shape[1])
    if not target:
        raise InvalidParameterError("CTC target must be non-empty")
    T = lp.shape[0]
    needed = min_frames(target)
    if needed > T:
        raise InfeasibleTargetError(f"target of length {len(target)} needs {needed} frames, only {T} available")
    ext = extend_with_blanks(target)
    alpha = kernels.ctc_alpha(lp, ext)
    beta = kernels.ctc_beta(lp, ext)
    loglik = float(np.logaddexp(alpha[-1, -1], alpha[-1, -2]))
    grad = np.zeros_like(lp)
    if loglik == NEG_INF:
        return math.inf, grad
    emit = lp[:, ext]
    with np.errstate(invalid="ignore"):
        occ = alpha + beta - emit - loglik
    occ[~np.isfinite(emit)] = NEG_INF
    occ = np.exp(occ)
    for k in np.unique(ext):
        grad[:, k] = -occ[:, ext == k].sum(axis=1)
    return -loglik, grad


def logit_gradient(e, grad):
    """Chain a log-prob gradient through log-softmax to the logits."""
    lp = _as_log_probs(e)
    return grad - np.exp(lp) * grad.sum(axis=1, keepdims=True)


def collapse(path, blank=BLANK):
    """Merge adjacent repeats, then drop blanks.  Strings stay strings."""
    out = [sym for sym, _ in groupby(path) if sym != blank]
    if isinstance(path, str):
        return "".join(out)
    return out


def greedy_decode(e, alphabet=None):
    """Per-frame argmax (lowest index wins ties), then collapse."""
    lp = _as_log_probs(e)
    path = np.argmax(lp, axis=1)
    labels = tuple(int(c) for c in collapse(path.tolist()))
    score = float(lp[np.arange(lp.shape[0]), path].sum())
    seq = alphabet.decode(labels) if alphabet is not None else ""
    return DecodeResult(labels=labels, log_prob=score, frame_path=path, sequence=seq)


def beam_decode(e, beam_width, alphabet=None):
    """CTC prefix beam search without a language model.

    Each prefix carries the log mass of alignments ending in blank (``pb``)
    and ending in its last label (``pnb``).  Extending by a label different
    from the last one needs no separating blank; repeating the last label
    either continues the same prefix (from ``pnb``) or, only from the
    blank-terminated mass ``pb``, appends a genuine repeat.  Duplicate
    prefixes merge by log-sum-exp.  The surviving prefixes are finally
    rescored exactly with the forward algorithm and the best is returned;
    its ``log_prob`` is the exact log P(sequence | x).  Ties prefer the
    lexicographically smaller index sequence.
    """
    if beam_width < 1:
        raise InvalidParameterError(f"beam_width must be >= 1, got {beam_width}")
    lp = _as_log_probs(e)
    T, K = lp.shape
    lse = _lse
    beams = {(): (0.0, NEG_INF)}
    for t in range(T):
        row = lp[t].tolist()
        nxt = {}

        def add(prefix, pb, pnb):
            old = nxt.get(prefix)
            if old is None:
                nxt[prefix] = (pb, pnb)
            else:
                nxt[prefix] = (lse(old[0], pb), lse(old[1], pnb))

        for prefix, (pb, pnb) in beams.items():
            total = lse(pb, pnb)
            add(prefix, total + row[BLANK], NEG_INF)
            last = prefix[-1] if prefix else None
            for c in range(1, K):
                p = row[c]
                if p == NEG_INF:
                    continue
                if c == last:
                    add(prefix, NEG_INF, pnb + p)
                    if pb != NEG_INF:
                        add(prefix + (c,), NEG_INF, pb + p)
                else:
                    add(prefix + (c,), NEG_INF, total + p)
        ranked = sorted(
            ((-lse(pb, pnb), prefix) for prefix, (pb, pnb) in nxt.items() if lse(pb, pnb) > NEG_INF),
        )
        beams = {prefix: nxt[prefix] for _, prefix in ranked[:beam_width]}
    best = None
    for prefix in beams:
        score = sequence_log_prob(lp, prefix)
        key = (-score, prefix)
        if best is None or key < best[0]:
            best = (key, prefix, score)
    if best is None:
        return DecodeResult(labels=(), log_prob=NEG_INF, frame_path=None, sequence="")
    _, labels, score = best
    seq = alphabet.decode(labels) if alphabet is not None else ""
    return DecodeResult(labels=tuple(labels), log_prob=float(score), frame_path=None, sequence=seq)


def forced_align(e, labels):
    """Most probable frame path that collapses to ``labels`` (Viterbi)."""
    lp = _as_log_probs(e)
    labels = _check_target(labels, lp.shape[1])
    if min_frames(labels) > lp.shape[0]:
        raise InfeasibleTargetError(f"cannot align {len(labels)} labels to {lp.shape[0]} frames")
    symbols, _ = kernels.ctc_viterbi(lp, extend_with_blanks(labels))
    return symbols


def with_frame_path(e, result):
    """Attach a Viterbi frame path to a result that lacks one (beam output)."""
    if result.frame_path is not None:
        return result
    path = forced_align(e, result.labels)
    return DecodeResult(result.labels, result.log_prob, path, result.sequence)


# -- exhaustive oracles ------------------------------------------------------

_ORACLE_MAX_T = 10
_ORACLE_MAX_K = 5


def _enumerate_collapsed(T, K, blank=BLANK):
    """Every length-T frame path with an integer code for its collapsed label sequence.

    Returns ``(paths, codes, lengths)``; the code of a sequence (c1..cn) is
    ``sum c_i * K ** (n - i)``, which is unique given its length.
    """
    if T > _ORACLE_MAX_T or K > _ORACLE_MAX_K:
        raise OracleTooLargeError(f"enumeration of {K}^{T} paths exceeds guard (T<={_ORACLE_MAX_T}, K<={_ORACLE_MAX_K})")
    paths = np.indices((K,) * T).reshape(T, -1).T
    codes = np.zeros(paths.shape[0], dtype=np.int64)
    lengths = np.zeros(paths.shape[0], dtype=np.int64)
    prev = np.full(paths.shape[0], -1)
    for t in range(T):
        sym = paths[:, t]
        emit = (sym != blank) & (sym != prev)
        codes = np.where(emit, codes * K + sym, codes)
        lengths += emit
        prev = sym
    return paths, codes, lengths


def _encode(labels, K):
    code = 0
    for c in labels:
        code = code * K + int(c)
    return code


def brute_force_loss(e, target):
    """-log of the summed probability of every frame path collapsing to ``target``."""
    lp = _as_log_probs(e)
    T, K = lp.shape
    paths, codes, lengths = _enumerate_collapsed(T, K)
    target = tuple(int(c) for c in target)
    hit = (codes == _encode(target, K)) & (lengths == len(target))
    if not np.any(hit):
        return math.inf
    path_lp = lp[np.arange(T)[None, :], paths[hit]].sum(axis=1)
    total = logsumexp(path_lp)
    return math.inf if total == NEG_INF else float(-total)


def brute_force_best_sequence(e):
    """Collapsed label sequence of maximal total probability, by enumeration.

    Returns ``(labels, log_prob)``.
    """
    lp = _as_log_probs(e)
    T, K = lp.shape
    paths, codes, lengths = _enumerate_collapsed(T, K)
    path_lp = lp[np.arange(T)[None, :], paths].sum(axis=1)
    keys = lengths * (K ** T) + codes
    uniq, inv = np.unique(keys, return_inverse=True)
    totals = np.full(len(uniq), NEG_INF)
    for i in range(len(uniq)):
        totals[i] = logsumexp(path_lp[inv == i])
    best = int(np.argmax(totals))
    key = int(uniq[best])
    n, code = divmod(key, K ** T)
    labels = []
    for _ in range(n):
        code, c = divmod(code, K)
        labels.append(c)
    return tuple(reversed(labels)), float(totals[best])
