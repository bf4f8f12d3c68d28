"""Desk-scale frame classifier trained with CTC.

Architecture, per utterance of T frames and M mel channels::

    x        (T, M)          log-mel input, divided by its own std
    stack    (T, (2c+1)M)    frames t-c .. t+c, zero padded at the edges
    z        (T, H)          tanh(stack @ W_in + b_in)
    fwd, bwd (T, H)          exponential moving averages of z, run forwards
                             and backwards in time (decay a)
    u        (T, 3H)         [z, fwd, bwd]
    logits   (T, K)          u @ W_out + b_out
    emission (T, K)          log_softmax(logits)

The frame stack plays the part of convolutional receptive field and the two
EMAs the part of a bidirectional recurrent layer.  Trained with plain
minibatch SGD on the mean CTC loss.
"""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernels
from .ctc import EmissionMatrix, ctc_loss, logit_gradient
from .errors import DimensionError, EmptyInputError, InvalidParameterError, TrainingError

log = logging.getLogger(__name__)

PARAM_NAMES = ("W_in", "b_in", "W_out", "b_out")
LR_SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class ModelConfig:
    input_mels: int = 80
    hidden_units: int = 32
    context_frames: int = 2
    alphabet_size: int = 5
    learning_rate: float = 0.05
    epochs: int = 20
    batch_size: int = 8
    rng_seed: int = 0
    recurrent: bool = True
    recurrent_decay: float = 0.9
    normalize_variance: bool = True
    clip_grad_norm: float = 5.0  # 0 disables
    lr_schedule: str = "cosine"  # or "constant"

    def __post_init__(self):
        for name in ("input_mels", "hidden_units", "alphabet_size", "epochs", "batch_size"):
            if getattr(self, name) < 1:
                raise InvalidParameterError(f"{name} must be >= 1")
        if self.context_frames < 0:
            raise InvalidParameterError("context_frames must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidParameterError("learning_rate must be > 0")
        if self.lr_schedule not in LR_SCHEDULES:
            raise InvalidParameterError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if not 0.0 <= self.recurrent_decay < 1.0:
            raise InvalidParameterError("recurrent_decay must be in [0, 1)")

    @property
    def input_dim(self):
        return (2 * self.context_frames + 1) * self.input_mels

    @property
    def feature_dim(self):
        return 3 * self.hidden_units if self.recurrent else self.hidden_units

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class ModelParams:
    config: ModelConfig
    W_in: np.ndarray
    b_in: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    def __post_init__(self):
        c = self.config
        expected = {
            "W_in": (c.input_dim, c.hidden_units),
            "b_in": (c.hidden_units,),
            "W_out": (c.feature_dim, c.alphabet_size),
            "b_out": (c.alphabet_size,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    def tensors(self):
        return [getattr(self, n) for n in PARAM_NAMES]

    def copy(self):
        return ModelParams(self.config, *(t.copy() for t in self.tensors()))

    @classmethod
    def zeros(cls, config):
        return cls(
            config,
            np.zeros((config.input_dim, config.hidden_units)),
            np.zeros(config.hidden_units),
            np.zeros((config.feature_dim, config.alphabet_size)),
            np.zeros(config.alphabet_size),
        )

    @classmethod
    def initialize(cls, config, rng=None):
        """Glorot-uniform weights, zero biases."""
        rng = rng if rng is not None else np.random.default_rng(config.rng_seed)

        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        return cls(
            config,
            glorot(config.input_dim, config.hidden_units),
            np.zeros(config.hidden_units),
            glorot(config.feature_dim, config.alphabet_size),
            np.zeros(config.alphabet_size),
        )


def stack_context(x, radius):
    """(T, M) -> (T, (2r+1)M) with zero padding; row t holds frames t-r..t+r."""
    if radius == 0:
        return np.array(x, dtype=np.float64)
    T, M = x.shape
    padded = np.zeros((T + 2 * radius, M))
    padded[radius : radius + T] = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (2 * radius + 1, M))
    return windows.reshape(T, (2 * radius + 1) * M)


def _inputs(params, s):
    x = s.values if hasattr(s, "values") else np.asarray(s, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.config.input_mels:
        raise DimensionError(f"model expects {params.config.input_mels} mel channels, got input of shape {x.shape}")
    if params.config.normalize_variance:
        std = float(x.std())
        if std > 1e-8:
            x = x / std
    return x


def _forward(params, s):
    c = params.config
    x = _inputs(params, s)
    stacked = stack_context(x, c.context_frames)
    z = np.tanh(stacked @ params.W_in + params.b_in)
    if c.recurrent:
        fwd = kernels.ema_scan(z, c.recurrent_decay, reverse=False)
        bwd = kernels.ema_scan(z, c.recurrent_decay, reverse=True)
        u = np.concatenate([z, fwd, bwd], axis=1)
    else:
        u = z
    logits = u @ params.W_out + params.b_out
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    return {"stacked": stacked, "z": z, "u": u, "log_probs": log_probs}


def forward(params, s):
    """Emission matrix (one row per spectrogram frame)."""
    return EmissionMatrix(_forward(params, s)["log_probs"])


def backward(params, s, target):
    """CTC loss of ``target`` and its gradient for every parameter tensor.

    Returns ``(loss, grads)`` with ``grads`` a dict keyed like the params.
    """
    c = params.config
    cache = _forward(params, s)
    loss, g_lp = ctc_loss(cache["log_probs"], target)
    d_logits = logit_gradient(cache["log_probs"], g_lp)
    u, z = cache["u"], cache["z"]
    grads = {"W_out": u.T @ d_logits, "b_out": d_logits.sum(axis=0)}
    d_u = d_logits @ params.W_out.T
    H = c.hidden_units
    d_z = d_u[:, :H].copy()
    if c.recurrent:
        # adjoint of a forward EMA is the reverse EMA, and vice versa
        d_z += kernels.ema_scan(d_u[:, H : 2 * H], c.recurrent_decay, reverse=True)
        d_z += kernels.ema_scan(d_u[:, 2 * H :], c.recurrent_decay, reverse=False)
    d_pre = d_z * (1.0 - z * z)
    grads["W_in"] = cache["stacked"].T @ d_pre
    grads["b_in"] = d_pre.sum(axis=0)
    return loss, grads


def _scheduled_lr(config, step, total_steps):
    if config.lr_schedule == "cosine":
        return 0.5 * config.learning_rate * (1.0 + math.cos(math.pi * step / total_steps))
    return config.learning_rate


def train(config, data, params=None, on_epoch=None):
    """Minibatch SGD on the mean CTC loss.

    ``data`` is an iterable of ``(spectrogram, target)`` pairs, materialised
    once.  The example order is reshuffled every epoch from ``config.rng_seed``.
    Returns ``(params, log)`` where ``log`` lists ``{"epoch", "mean_loss"}``.
    """
    data = list(data)
    if not data:
        raise EmptyInputError("training data is empty")
    rng = np.random.default_rng(config.rng_seed)
    params = params.copy() if params is not None else ModelParams.initialize(config, rng)
    history = []
    n_batches = -(-len(data) // config.batch_size)
    total_steps, step = config.epochs * n_batches, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            acc = {name: np.zeros_like(getattr(params, name)) for name in PARAM_NAMES}
            for i in batch:
                spec, target = data[i]
                loss, grads = backward(params, spec, target)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
                total += loss
                for name in PARAM_NAMES:
                    acc[name] += grads[name]
            scale = 1.0 / len(batch)
            if config.clip_grad_norm > 0:
                norm = math.sqrt(sum(float(np.sum(g * g)) for g in acc.values())) * scale
                if norm > config.clip_grad_norm:
                    scale *= config.clip_grad_norm / norm
            lr = _scheduled_lr(config, step, total_steps)
            step += 1
            for name in PARAM_NAMES:
                p = getattr(params, name)
                p -= lr * scale * acc[name]
        mean_loss = total / len(data)
        if not math.isfinite(mean_loss) or not all(np.all(np.isfinite(t)) for t in params.tensors()):
            raise TrainingError(f"training diverged at epoch {epoch}", epoch=epoch)
        history.append({"epoch": epoch, "mean_loss": mean_loss})
        log.debug("epoch %d mean loss %.4f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params, history
