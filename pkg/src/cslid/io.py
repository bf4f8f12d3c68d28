"""File formats.

All binary containers are little-endian.

``SPEC`` spectrogram::

    b"SPEC" u32 n_frames u32 n_mels f64 hop_ms f64 window_ms
    f32[n_frames * n_mels] row-major values
    optional: b"PLAN" u32 nbytes  utf-8 JSON mask plan

``EMIT`` emission matrix::

    b"EMIT" u32 T u32 alphabet_size  f32[T * alphabet_size] row-major log-probs

``LIDM`` model checkpoint::

    b"LIDM" u32 nbytes  utf-8 JSON model config
    f32 tensors W_in, b_in, W_out, b_out (shapes follow from the config)

Manifest: UTF-8 JSON lines, one utterance each::

    {"audio": "wav/utt0001.wav", "transcript": "SSGGEE", "pair": "gu-en",
     "task": "B", "utt": "utt0001", "split": "train"}

``utt`` defaults to the audio file stem; relative audio paths resolve
against the manifest's directory.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import dsp
from .augment import MaskPlan
from .ctc import EmissionMatrix
from .errors import ConfigurationError, ContainerFormatError, DataError
from .labels import DEFAULT_PAIRS, parse_transcript
from .model import PARAM_NAMES, ModelConfig, ModelParams

_SPEC_HEADER = struct.Struct("<4sIIdd")
_EMIT_HEADER = struct.Struct("<4sII")
_BLOCK = struct.Struct("<4sI")


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise ContainerFormatError(f"truncated {what}: wanted {n} bytes, got {len(data)}")
    return data


def write_spectrogram(path, s, plan=None):
    with open(path, "wb") as fh:
        fh.write(_SPEC_HEADER.pack(b"SPEC", s.n_frames, s.n_mels, s.config.hop_ms, s.config.window_ms))
        fh.write(np.ascontiguousarray(s.values, dtype="<f4").tobytes())
        if plan is not None:
            payload = json.dumps(plan.to_dict(), sort_keys=True).encode("utf-8")
            fh.write(_BLOCK.pack(b"PLAN", len(payload)))
            fh.write(payload)


def read_spectrogram(path, config=None):
    """Returns ``(Spectrogram, MaskPlan or None)``."""
    with open(path, "rb") as fh:
        magic, n_frames, n_mels, hop_ms, window_ms = _SPEC_HEADER.unpack(_read_exact(fh, _SPEC_HEADER.size, "SPEC header"))
        if magic != b"SPEC":
            raise ContainerFormatError(f"{path}: bad magic {magic!r}, expected b'SPEC'")
        values = np.frombuffer(_read_exact(fh, 4 * n_frames * n_mels, "SPEC values"), dtype="<f4")
        plan = None
        head = fh.read(_BLOCK.size)
        if head:
            if len(head) != _BLOCK.size:
                raise ContainerFormatError(f"{path}: truncated trailing record")
            tag, size = _BLOCK.unpack(head)
            if tag != b"PLAN":
                raise ContainerFormatError(f"{path}: unknown record {tag!r}")
            plan = MaskPlan.from_dict(json.loads(_read_exact(fh, size, "PLAN record").decode("utf-8")))
    if config is None:
        config = dsp.FramingConfig(window_ms=window_ms, hop_ms=hop_ms, n_mels=n_mels)
    spec = dsp.Spectrogram(values.reshape(n_frames, n_mels).astype(np.float64), config, mean_normalized=True)
    return spec, plan


def write_emissions(path, e):
    lp = e.log_probs if isinstance(e, EmissionMatrix) else np.asarray(e)
    with open(path, "wb") as fh:
        fh.write(_EMIT_HEADER.pack(b"EMIT", lp.shape[0], lp.shape[1]))
        # -inf survives the float32 round trip
        fh.write(np.ascontiguousarray(lp, dtype="<f4").tobytes())


def read_emissions(path):
    """Load an ``EMIT`` file; rows are renormalised in float64 after the f32 round trip."""
    with open(path, "rb") as fh:
        magic, T, K = _EMIT_HEADER.unpack(_read_exact(fh, _EMIT_HEADER.size, "EMIT header"))
        if magic != b"EMIT":
            raise ContainerFormatError(f"{path}: bad magic {magic!r}, expected b'EMIT'")
        lp = np.frombuffer(_read_exact(fh, 4 * T * K, "EMIT values"), dtype="<f4").astype(np.float64).reshape(T, K)
    return EmissionMatrix(lp - logsumexp(lp, axis=1, keepdims=True))


def write_checkpoint(path, params):
    payload = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_BLOCK.pack(b"LIDM", len(payload)))
        fh.write(payload)
        for tensor in params.tensors():
            fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def read_checkpoint(path):
    with open(path, "rb") as fh:
        magic, size = _BLOCK.unpack(_read_exact(fh, _BLOCK.size, "LIDM header"))
        if magic != b"LIDM":
            raise ContainerFormatError(f"{path}: bad magic {magic!r}, expected b'LIDM'")
        config = ModelConfig.from_dict(json.loads(_read_exact(fh, size, "LIDM config").decode("utf-8")))
        shapes = ModelParams.zeros(config)
        tensors = []
        for name in PARAM_NAMES:
            shape = getattr(shapes, name).shape
            n = int(np.prod(shape))
            tensors.append(np.frombuffer(_read_exact(fh, 4 * n, name), dtype="<f4").astype(np.float64).reshape(shape))
        if fh.read(1):
            raise ContainerFormatError(f"{path}: trailing bytes after tensors")
    return ModelParams(config, *tensors)


# -- manifest -----------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    utt: str
    audio: str
    transcript: str
    pair: str = "gu-en"
    task: str = "B"
    split: str = ""

    def to_json(self, base=None):
        audio = self.audio
        if base is not None:
            try:
                audio = str(Path(audio).resolve().relative_to(Path(base).resolve()))
            except ValueError:
                pass
        d = {"audio": audio, "transcript": self.transcript, "pair": self.pair, "task": self.task, "utt": self.utt}
        if self.split:
            d["split"] = self.split
        return json.dumps(d, ensure_ascii=False, sort_keys=True)


def read_manifest(path):
    path = Path(path)
    base = path.parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                audio = Path(d["audio"])
                transcript = d["transcript"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
            if not audio.is_absolute():
                audio = base / audio
            task = d.get("task", "B")
            if task not in ("A", "B"):
                raise DataError(f"{path}:{lineno}: task must be 'A' or 'B', got {task!r}")
            entries.append(
                ManifestEntry(
                    utt=d.get("utt") or audio.stem,
                    audio=str(audio),
                    transcript=transcript,
                    pair=d.get("pair", "gu-en"),
                    task=task,
                    split=d.get("split", ""),
                )
            )
    return entries


def write_manifest(path, entries):
    base = Path(path).parent
    with open(path, "w", encoding="utf-8") as fh:
        for e in entries:
            fh.write(e.to_json(base) + "\n")


def alphabet_for(pair, alphabets=None):
    table = alphabets if alphabets is not None else DEFAULT_PAIRS
    if pair not in table:
        raise ConfigurationError(f"no alphabet configured for language pair {pair!r}")
    return table[pair]


def load_entry(entry, framing=None, alphabets=None):
    """Featurise one manifest entry: ``(Spectrogram, LanguageTranscript)``."""
    framing = framing or dsp.FramingConfig()
    transcript = parse_transcript(entry.transcript, alphabet_for(entry.pair, alphabets))
    clip = dsp.load_wav(entry.audio)
    return dsp.log_mel_spectrogram(clip, framing), transcript


def write_pgm(path, s, lo=None, hi=None):
    """Binary PGM image of a spectrogram: time left to right, low mel channels at the bottom."""
    v = np.asarray(s.values if hasattr(s, "values") else s, dtype=np.float64).T[::-1]
    lo = float(v.min()) if lo is None else lo
    hi = float(v.max()) if hi is None else hi
    scaled = np.zeros_like(v) if hi <= lo else (np.clip(v, lo, hi) - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
