"""Audio ingestion and log-mel featurisation.

Pipeline: Hamming-windowed magnitude STFT -> triangular HTK-mel filterbank
spanning 0 Hz to Nyquist -> natural log with a 1e-10 floor -> subtraction of
the per-utterance global mean.  Zero is then "the mean", which is what the
masking code in :mod:`cslid.augment` relies on.
"""

import logging
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile

from .errors import (
    ConfigurationError,
    EmptyInputError,
    TooShortError,
    UnsupportedCodecError,
    WavFormatError,
)

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioClip samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class FramingConfig:
    """STFT framing and mel settings.

    Defaults follow the training front-end: 20 ms Hamming windows with a
    10 ms shift at 16 kHz, 512-point FFT, 80 mel channels.
    """

    window_ms: float = 20.0
    hop_ms: float = 10.0
    n_mels: int = 80
    n_fft: int = 512
    sample_rate: int = 16000
    window_fn: str = "hamming"

    def __post_init__(self):
        if not 0 < self.hop_ms <= self.window_ms:
            raise ConfigurationError(f"need 0 < hop_ms <= window_ms, got hop={self.hop_ms} window={self.window_ms}")
        if self.n_mels < 1:
            raise ConfigurationError("n_mels must be >= 1")
        if self.sample_rate <= 0:
            raise ConfigurationError("sample_rate must be positive")
        if self.window_fn != "hamming":
            raise ConfigurationError(f"unsupported window function {self.window_fn!r}")
        if self.n_fft < self.window_samples:
            raise ConfigurationError(f"n_fft={self.n_fft} is shorter than the window ({self.window_samples} samples)")

    @property
    def window_samples(self):
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self):
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    def n_frames(self, n_samples):
        """Frame count for a signal of ``n_samples`` (no padding)."""
        if n_samples < self.window_samples:
            return 0
        return (n_samples - self.window_samples) // self.hop_samples + 1


@dataclass(frozen=True)
class Spectrogram:
    """Log-mel matrix, shape ``(n_frames, n_mels)``.

    ``mean_normalized`` records that the featuriser subtracted the global
    mean, so a cell value of 0.0 stands for the utterance mean.  Augmented
    copies keep the flag: their masked cells are set to that mean.
    """

    values: np.ndarray
    config: FramingConfig = field(default_factory=FramingConfig)
    mean_normalized: bool = True

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Spectrogram values must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Spectrogram values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def n_mels(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def with_values(self, values):
        return Spectrogram(values, self.config, self.mean_normalized)


# -- WAV I/O -----------------------------------------------------------------


def load_wav(path):
    """Read a mono (or first-channel) PCM16/float32 WAV into [-1, 1]."""
    try:
        sample_rate, data = scipy.io.wavfile.read(path)
    except (ValueError, struct.error, EOFError, IndexError) as exc:
        raise WavFormatError(f"{path}: malformed WAV ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise UnsupportedCodecError(f"{path}: unsupported sample encoding {data.dtype}; need PCM16 or float32")
    if samples.ndim == 2:
        warnings.warn(f"{path}: {samples.shape[1]}-channel audio, using channel 0", stacklevel=2)
        samples = samples[:, 0]
    if samples.size == 0:
        raise EmptyInputError(f"{path}: zero-length audio")
    if not np.all(np.isfinite(samples)):
        raise WavFormatError(f"{path}: non-finite float samples")
    return AudioClip(np.clip(samples, -1.0, 1.0), int(sample_rate))


def save_wav(path, clip):
    """Write a clip as 16-bit PCM."""
    pcm = np.round(np.clip(clip.samples, -1.0, 32767 / 32768) * 32768.0).astype(np.int16)
    scipy.io.wavfile.write(path, clip.sample_rate, pcm)


# -- mel scale -----------------------------------------------------------------


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_points_hz(n_mels, sample_rate):
    """The n_mels + 2 filter edge frequencies; centers are ``[1:-1]``."""
    nyquist = sample_rate / 2.0
    return mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), n_mels + 2))


def mel_center_frequencies(n_mels, sample_rate):
    return mel_points_hz(n_mels, sample_rate)[1:-1]


def mel_filterbank(n_mels, n_fft, sample_rate):
    """Triangular filters with unit peak, shape ``(n_mels, n_fft // 2 + 1)``."""
    fft_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    edges = mel_points_hz(n_mels, sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (fft_freqs[None, :] - lower) / (center - lower)
    falling = (upper - fft_freqs[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


# -- featurisation ------------------------------------------------------------


def frame_signal(samples, config):
    """Stack frames of ``window_samples`` with stride ``hop_samples``."""
    n = config.n_frames(len(samples))
    if n < 1:
        raise TooShortError(
            f"clip of {len(samples)} samples is shorter than one window ({config.window_samples} samples)"
        )
    win = config.window_samples
    idx = np.arange(win)[None, :] + config.hop_samples * np.arange(n)[:, None]
    return samples[idx]


def mel_energies(clip, config):
    """Mel-filtered STFT magnitudes before the log, shape (n_frames, n_mels)."""
    if clip.sample_rate != config.sample_rate:
        raise ConfigurationError(
            f"clip sample rate {clip.sample_rate} Hz differs from configured {config.sample_rate} Hz (no resampling)"
        )
    frames = frame_signal(clip.samples, config) * np.hamming(config.window_samples)[None, :]
    magnitude = np.abs(np.fft.rfft(frames, n=config.n_fft, axis=1))
    fbank = mel_filterbank(config.n_mels, config.n_fft, config.sample_rate)
    return magnitude @ fbank.T


def log_mel_spectrogram(clip, config=None, normalize=True):
    """Zero-mean log-mel spectrogram of ``clip``."""
    config = config or FramingConfig()
    logmel = np.log(np.maximum(mel_energies(clip, config), LOG_FLOOR))
    if normalize:
        logmel = logmel - logmel.mean()
    return Spectrogram(logmel, config, mean_normalized=normalize)


def frames_per_label_char(framing, label_period_ms=200.0):
    """Spectrogram frames covered by one transcript character.

    Rounded to nearest when the label period is not a multiple of the hop;
    the last character then absorbs the remainder.
    """
    hop = framing.hop_ms if isinstance(framing, FramingConfig) else float(framing)
    if hop > label_period_ms:
        raise ConfigurationError(f"hop {hop} ms exceeds label period {label_period_ms} ms")
    ratio = label_period_ms / hop
    count = int(math.floor(ratio + 0.5))
    if abs(ratio - count) > 1e-9:
        log.warning("label period %.3f ms is not a multiple of hop %.3f ms; rounding to %d frames", label_period_ms, hop, count)
    return count
