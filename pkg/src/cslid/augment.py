"""SpecAugment plus the transcript-driven language mask.

Augmentation is split in two: a *plan* (warp parameters plus lists of
half-open channel and frame intervals) is sampled or derived first, then
applied to a spectrogram.  Plans are plain data, so they can be logged,
serialised next to the augmented features and replayed exactly.

Random numbers come from numpy's PCG64 (``numpy.random.default_rng``).  Batch
augmentation seeds utterance ``i`` with ``SeedSequence([seed, i])``, so output
does not depend on processing order.
"""

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .errors import CslidError, DimensionError, InvalidWarpError
from .labels import check_alignment, english_segments

log = logging.getLogger(__name__)


class Provenance(str, enum.Enum):
    RANDOM = "Random"
    LANGUAGE_TRANSCRIPT = "LanguageTranscript"


@dataclass(frozen=True)
class AugmentPolicy:
    time_warp_W: int = 10
    freq_mask_F: int = 15
    n_freq_masks: int = 1
    time_mask_T: int = 20
    n_time_masks: int = 1
    use_language_mask: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("time_warp_W", "freq_mask_F", "n_freq_masks", "time_mask_T", "n_time_masks", "rng_seed"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown policy keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class MaskPlan:
    warp: tuple = None  # (center_frame, signed displacement) or None
    freq_masks: tuple = field(default_factory=tuple)
    time_masks: tuple = field(default_factory=tuple)
    provenance: Provenance = Provenance.RANDOM

    def is_empty(self):
        return self.warp is None and not self.freq_masks and not self.time_masks

    def to_dict(self):
        return {
            "warp": list(self.warp) if self.warp is not None else None,
            "freq_masks": [list(m) for m in self.freq_masks],
            "time_masks": [list(m) for m in self.time_masks],
            "provenance": self.provenance.value,
        }

    @classmethod
    def from_dict(cls, d):
        warp = d.get("warp")
        return cls(
            warp=tuple(warp) if warp is not None else None,
            freq_masks=tuple(tuple(m) for m in d.get("freq_masks", ())),
            time_masks=tuple(tuple(m) for m in d.get("time_masks", ())),
            provenance=Provenance(d.get("provenance", "Random")),
        )


def _sample_interval(rng, max_width, extent):
    """width ~ U{0..max_width-1}, start ~ U{0..extent-width-1}; None if empty."""
    if max_width <= 0 or extent <= 0:
        return None
    width = int(rng.integers(0, min(max_width, extent)))
    if width == 0:
        return None
    start = int(rng.integers(0, extent - width))
    return (start, start + width)


def sample_freq_masks(policy, n_mels, rng):
    masks = []
    for _ in range(policy.n_freq_masks):
        m = _sample_interval(rng, policy.freq_mask_F, n_mels)
        if m is not None:
            masks.append(m)
    return tuple(masks)


def sample_random_plan(policy, shape, rng):
    """Draw warp, frequency masks and time masks for a ``(tau, v)`` spectrogram.

    Zero-width draws are dropped, so degenerate policies give empty plans.
    """
    tau, v = shape
    W = policy.time_warp_W
    warp = None
    # integer centers strictly inside (W, tau - W)
    if W > 0 and tau - W - 1 > W:
        center = int(rng.integers(W + 1, tau - W))
        distance = int(rng.integers(0, W + 1))
        sign = -1 if rng.integers(0, 2) == 0 else 1
        warp = (center, sign * distance)
    freq = sample_freq_masks(policy, v, rng)
    times = []
    for _ in range(policy.n_time_masks):
        m = _sample_interval(rng, policy.time_mask_T, tau)
        if m is not None:
            times.append(m)
    return MaskPlan(warp=warp, freq_masks=freq, time_masks=tuple(times), provenance=Provenance.RANDOM)


def language_mask_plan(t, framing, n_frames, label_period_ms=None):
    """One time mask per English run of the transcript; no warp, no frequency masks."""
    period = label_period_ms if label_period_ms is not None else t.label_period_ms
    fpc = dsp.frames_per_label_char(framing, period)
    spans = tuple((seg.start_frame, seg.end_frame) for seg in english_segments(t, fpc, n_frames))
    return MaskPlan(warp=None, freq_masks=(), time_masks=spans, provenance=Provenance.LANGUAGE_TRANSCRIPT)


def warp_source_positions(tau, center, displacement):
    """Source time coordinate read by each output frame of the warp.

    Output frame ``center + displacement`` reads source frame ``center``;
    both sides are linear, pinned at frame 0 and frame tau - 1.
    """
    dest = center + displacement
    if not (0 < center < tau - 1) or not (0 < dest <= tau - 1):
        raise InvalidWarpError(f"warp center {center} with displacement {displacement} is invalid for {tau} frames")
    j = np.arange(tau, dtype=np.float64)
    src = np.empty(tau)
    left = j <= dest
    src[left] = j[left] * center / dest
    if dest < tau - 1:
        right = ~left
        src[right] = center + (j[right] - dest) * (tau - 1 - center) / (tau - 1 - dest)
    return src


def time_warp(s, center, displacement, max_warp=None):
    """Piecewise-linear time warp, linear interpolation per mel channel."""
    if max_warp is not None and not (max_warp < center < s.n_frames - max_warp and abs(displacement) <= max_warp):
        raise InvalidWarpError(f"warp ({center}, {displacement}) outside limits for W={max_warp}, tau={s.n_frames}")
    if displacement == 0:
        return s
    src = warp_source_positions(s.n_frames, center, displacement)
    lo = np.clip(np.floor(src).astype(np.int64), 0, s.n_frames - 1)
    hi = np.minimum(lo + 1, s.n_frames - 1)
    frac = (src - lo)[:, None]
    v = s.values
    return s.with_values(v[lo] * (1.0 - frac) + v[hi] * frac)


def _check_interval(interval, extent, what):
    a, b = interval
    if not (0 <= a < b <= extent):
        raise DimensionError(f"{what} interval [{a}, {b}) outside [0, {extent})")


def apply_plan(s, plan):
    """Warp first, then zero every masked channel band and frame range."""
    if not s.mean_normalized:
        raise DimensionError("masking with zeros requires a mean-normalized spectrogram")
    for m in plan.freq_masks:
        _check_interval(m, s.n_mels, "frequency")
    for m in plan.time_masks:
        _check_interval(m, s.n_frames, "time")
    out = s
    if plan.warp is not None:
        out = time_warp(out, *plan.warp)
    if not plan.freq_masks and not plan.time_masks:
        return out
    values = np.array(out.values)
    for a, b in plan.freq_masks:
        values[:, a:b] = 0.0
    for a, b in plan.time_masks:
        values[a:b, :] = 0.0
    return out.with_values(values)


def utterance_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def plan_for(policy, s, transcript, rng):
    """The plan used for one training utterance under ``policy``.

    With the language mask on, transcript-derived time masks replace random
    time masks, frequency masks are still sampled, and warping is off (it
    would break transcript-to-frame alignment).
    """
    if policy.use_language_mask:
        lang = language_mask_plan(transcript, s.config, s.n_frames)
        freq = sample_freq_masks(policy, s.n_mels, rng)
        return MaskPlan(warp=None, freq_masks=freq, time_masks=lang.time_masks, provenance=Provenance.LANGUAGE_TRANSCRIPT)
    return sample_random_plan(policy, s.shape, rng)


@dataclass(frozen=True)
class AugmentedItem:
    utt: str
    clean: dsp.Spectrogram
    augmented: dsp.Spectrogram
    plan: MaskPlan
    transcript: object


class AugmentStream:
    """Iterates ``(utterance, clean, augmented, plan)`` for a manifest.

    Entries that fail to load are logged and skipped; ``n_skipped`` counts them.
    """

    def __init__(self, entries, policy, framing=None, alphabets=None, loader=None):
        self.entries = list(entries)
        self.policy = policy
        self.framing = framing or dsp.FramingConfig()
        self.alphabets = alphabets
        self.loader = loader
        self.n_skipped = 0
        self.n_emitted = 0

    def __iter__(self):
        from .io import load_entry  # io imports augment for the plan record

        for index, entry in enumerate(self.entries):
            try:
                if self.loader is not None:
                    clean, transcript = self.loader(entry)
                else:
                    clean, transcript = load_entry(entry, self.framing, self.alphabets)
                check_alignment(transcript, dsp.frames_per_label_char(clean.config, transcript.label_period_ms), clean.n_frames, entry.utt)
            except (CslidError, OSError) as exc:
                self.n_skipped += 1
                log.error("skipping %s: %s", getattr(entry, "utt", index), exc)
                continue
            plan = plan_for(self.policy, clean, transcript, utterance_rng(self.policy.rng_seed, index))
            self.n_emitted += 1
            yield AugmentedItem(entry.utt, clean, apply_plan(clean, plan), plan, transcript)


def augment_batch(entries, policy, framing=None, alphabets=None, loader=None):
    return AugmentStream(entries, policy, framing, alphabets, loader)
