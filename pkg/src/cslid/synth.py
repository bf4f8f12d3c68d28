"""Synthetic code-switched audio with exact 200 ms language transcripts.

Each 200 ms slot is labelled by a three-state Markov chain over
{silence, native, english}.  Native slots are voiced with odd harmonics of
200 Hz under a low-band emphasis, English slots with even harmonics of
250 Hz under a high-band emphasis; silence is a -60 dB noise floor.  The
timbres are arbitrary constants chosen to be separable in the mel domain,
not models of real languages.

Transition probabilities per slot::

    native  -> silence  silence_prob     native  -> english  switch_prob
    english -> silence  silence_prob     english -> native   return_prob
    silence -> silence  silence_stay_prob
    silence -> native   (1 - silence_stay_prob) * native_start_prob
    silence -> english  (1 - silence_stay_prob) * (1 - native_start_prob)

The first slot is silence with probability ``silence_prob``, otherwise a
language drawn like a silence exit.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dsp
from .io import ManifestEntry, write_manifest
from .labels import DEFAULT_LABEL_PERIOD_MS, LabelAlphabet, LanguageTranscript, write_alphabets

log = logging.getLogger(__name__)

SILENCE, NATIVE, ENGLISH = 0, 1, 2
CROSSFADE_S = 0.05
SILENCE_FLOOR = 1e-3  # amplitude of the silence noise floor


@dataclass(frozen=True)
class Timbre:
    f0_hz: float
    harmonics: tuple
    emphasis_hz: float
    emphasis_octaves: float = 1.0

    def partial_amplitudes(self, f0):
        freqs = np.array([h * f0 for h in self.harmonics], dtype=np.float64)
        octaves = np.log2(np.maximum(freqs, 1.0) / self.emphasis_hz)
        return freqs, np.exp(-0.5 * (octaves / self.emphasis_octaves) ** 2)

    @property
    def dominant_hz(self):
        freqs, amps = self.partial_amplitudes(self.f0_hz)
        return float(freqs[np.argmax(amps)])


NATIVE_TIMBRE = Timbre(f0_hz=200.0, harmonics=(1, 3, 5, 7, 9, 11, 13, 15, 17, 19), emphasis_hz=600.0)
ENGLISH_TIMBRE = Timbre(f0_hz=250.0, harmonics=(2, 4, 6, 8, 10, 12, 14, 16), emphasis_hz=2500.0)


@dataclass(frozen=True)
class SynthSpec:
    n_utterances: int = 200
    duration_range_s: tuple = (2.0, 4.0)
    native: Timbre = NATIVE_TIMBRE
    english: Timbre = ENGLISH_TIMBRE
    silence_prob: float = 0.1
    silence_stay_prob: float = 0.5
    switch_prob: float = 0.15
    return_prob: float = 0.35
    native_start_prob: float = 0.8
    f0_jitter: float = 0.05
    noise_snr_db: float = None
    test_noise_snr_db: float = None
    sample_rate: int = 16000
    pair: str = "gu-en"
    alphabet: LabelAlphabet = field(default_factory=LabelAlphabet)
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("silence_prob", "silence_stay_prob", "switch_prob", "return_prob", "native_start_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.silence_prob + max(self.switch_prob, self.return_prob) > 1.0:
            raise ValueError("silence_prob + switch/return probability must not exceed 1")
        lo, hi = self.duration_range_s
        if not 0 < lo <= hi:
            raise ValueError(f"invalid duration range {self.duration_range_s}")
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be >= 1")
        if abs(self.native.dominant_hz - self.english.dominant_hz) < 1e-9:
            raise ValueError("language timbres must have different dominant partials")

    @property
    def slot_range(self):
        """Inclusive range of 200 ms slot counts."""
        period = DEFAULT_LABEL_PERIOD_MS / 1000.0
        lo, hi = self.duration_range_s
        return max(1, int(math.ceil(lo / period - 1e-9))), max(1, int(math.floor(hi / period + 1e-9)))

    def transition_matrix(self):
        s, st, w, r, n = self.silence_prob, self.silence_stay_prob, self.switch_prob, self.return_prob, self.native_start_prob
        return np.array(
            [
                [st, (1 - st) * n, (1 - st) * (1 - n)],
                [s, 1 - s - w, w],
                [s, r, 1 - s - r],
            ]
        )

    def initial_distribution(self):
        s, n = self.silence_prob, self.native_start_prob
        return np.array([s, (1 - s) * n, (1 - s) * (1 - n)])

    def to_dict(self):
        d = asdict(self)
        d["duration_range_s"] = list(self.duration_range_s)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key, default in (("native", NATIVE_TIMBRE), ("english", ENGLISH_TIMBRE)):
            if key in d and isinstance(d[key], dict):
                t = dict(d[key])
                t["harmonics"] = tuple(t.get("harmonics", default.harmonics))
                d[key] = Timbre(**t)
        if "alphabet" in d and isinstance(d["alphabet"], dict):
            d["alphabet"] = LabelAlphabet(**d["alphabet"])
        if "duration_range_s" in d:
            d["duration_range_s"] = tuple(d["duration_range_s"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**d)


def sample_states(spec, n_slots, rng):
    P = spec.transition_matrix()
    states = np.empty(n_slots, dtype=np.int64)
    states[0] = rng.choice(3, p=spec.initial_distribution())
    for i in range(1, n_slots):
        states[i] = rng.choice(3, p=P[states[i - 1]])
    return states


def _slot_envelopes(states, slot_len, n_samples, sample_rate):
    """Per-state gain curves: 1 inside the state's slots, raised-cosine crossfades at boundaries."""
    envs = np.zeros((3, n_samples))
    for i, st in enumerate(states):
        envs[st, i * slot_len : (i + 1) * slot_len] = 1.0
    half = int(round(CROSSFADE_S * sample_rate / 2))
    if half > 0:
        ramp = 0.5 - 0.5 * np.cos(np.pi * (np.arange(2 * half) + 0.5) / (2 * half))
        for i in range(1, len(states)):
            if states[i] == states[i - 1]:
                continue
            b = i * slot_len
            lo, hi = max(0, b - half), min(n_samples, b + half)
            r = ramp[lo - (b - half) : hi - (b - half)]
            envs[states[i - 1], lo:hi] = 1.0 - r
            envs[states[i], lo:hi] = r
    return envs


def _voice(timbre, states, target_state, slot_len, n_samples, sample_rate, jitter, rng):
    """Harmonic tone with per-slot f0 jitter (phase-continuous)."""
    f0 = np.full(n_samples, timbre.f0_hz)
    for i, st in enumerate(states):
        if st == target_state:
            f0[i * slot_len : (i + 1) * slot_len] = timbre.f0_hz * (1.0 + jitter * rng.uniform(-1.0, 1.0))
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    out = np.zeros(n_samples)
    nyquist = sample_rate / 2
    _, amps = timbre.partial_amplitudes(timbre.f0_hz)
    for h, a in zip(timbre.harmonics, amps):
        if h * timbre.f0_hz * (1 + jitter) >= nyquist:
            continue
        out += a * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    return out / np.sum(amps)


def add_noise(samples, snr_db, rng):
    power = float(np.mean(samples**2))
    if power <= 0:
        return samples
    noise_power = power / (10.0 ** (snr_db / 10.0))
    return samples + rng.normal(0.0, math.sqrt(noise_power), size=samples.shape)


def generate_utterance(spec, rng, noise_snr_db=None):
    """One ``(AudioClip, LanguageTranscript)`` pair."""
    sr = spec.sample_rate
    slot_len = int(round(DEFAULT_LABEL_PERIOD_MS / 1000.0 * sr))
    lo, hi = spec.slot_range
    n_slots = int(rng.integers(lo, hi + 1))
    states = sample_states(spec, n_slots, rng)
    n = n_slots * slot_len
    envs = _slot_envelopes(states, slot_len, n, sr)
    native = _voice(spec.native, states, NATIVE, slot_len, n, sr, spec.f0_jitter, rng)
    english = _voice(spec.english, states, ENGLISH, slot_len, n, sr, spec.f0_jitter, rng)
    gains = rng.uniform(0.5, 1.0, size=2)
    audio = gains[0] * envs[NATIVE] * native + gains[1] * envs[ENGLISH] * english
    audio = audio + rng.normal(0.0, SILENCE_FLOOR, size=n)
    snr = noise_snr_db if noise_snr_db is not None else spec.noise_snr_db
    if snr is not None:
        audio = add_noise(audio, snr, rng)
    peak = np.max(np.abs(audio))
    if peak > 0.95:
        audio = audio * (0.95 / peak)
    a = spec.alphabet
    chars = "".join((a.silence_char, a.native_char, a.english_char)[s] for s in states)
    return dsp.AudioClip(audio, sr), LanguageTranscript(chars, a)


def split_counts(n):
    """80/10/10 train/dev/test."""
    n_train = int(round(0.8 * n))
    n_dev = int(round(0.1 * n))
    return n_train, n_dev, n - n_train - n_dev


def split_of(index, n):
    n_train, n_dev, _ = split_counts(n)
    if index < n_train:
        return "train"
    if index < n_train + n_dev:
        return "dev"
    return "test"


def utterance_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), 7919, int(index)]))


def generate_corpus(spec):
    """Yield ``(utt_id, split, clip, transcript)`` for the whole corpus, in memory."""
    width = max(4, len(str(spec.n_utterances - 1)))
    for i in range(spec.n_utterances):
        split = split_of(i, spec.n_utterances)
        snr = spec.test_noise_snr_db if split == "test" and spec.test_noise_snr_db is not None else None
        clip, transcript = generate_utterance(spec, utterance_rng(spec.rng_seed, i), noise_snr_db=snr)
        yield f"utt{i:0{width}d}", split, clip, transcript


def generate_dataset(spec, out_dir):
    """Write WAVs, ``.lid`` transcripts, ``alphabet.ini`` and ``manifest.jsonl``.

    Returns the manifest entries.
    """
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    (out / "lid").mkdir(parents=True, exist_ok=True)
    entries = []
    for utt, split, clip, transcript in generate_corpus(spec):
        wav = out / "wav" / f"{utt}.wav"
        dsp.save_wav(wav, clip)
        (out / "lid" / f"{utt}.lid").write_text(transcript.chars + "\n", encoding="utf-8")
        entries.append(ManifestEntry(utt=utt, audio=str(wav), transcript=transcript.chars, pair=spec.pair, task="B", split=split))
    write_manifest(out / "manifest.jsonl", entries)
    write_alphabets(out / "alphabet.ini", {spec.pair: spec.alphabet})
    (out / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.info("wrote %d utterances to %s", len(entries), out)
    return entries
