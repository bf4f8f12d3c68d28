"""Language-ID transcripts: one character per 200 ms of audio.

A transcript such as ``"SSSGGGEEGG"`` is split into maximal same-language
runs, and each run is mapped onto a half-open range of spectrogram frames.
"""

import configparser
import enum
import logging
from dataclasses import dataclass
from itertools import groupby

from .errors import ConfigurationError, InvalidLabelError

log = logging.getLogger(__name__)

DEFAULT_LABEL_PERIOD_MS = 200.0


@dataclass(frozen=True)
class LabelAlphabet:
    native_char: str = "G"
    english_char: str = "E"
    silence_char: str = "S"
    apostrophe_char: str = "′"

    def __post_init__(self):
        chars = [self.native_char, self.english_char, self.silence_char, self.apostrophe_char]
        if any(len(c) != 1 for c in chars):
            raise ConfigurationError(f"alphabet symbols must be single characters: {chars}")
        if len(set(chars)) != len(chars):
            raise ConfigurationError(f"alphabet symbols must be distinct: {chars}")

    @property
    def transcript_chars(self):
        """Characters allowed in transcripts (no apostrophe, no blank)."""
        return (self.native_char, self.english_char, self.silence_char)


# Per language pair, the native language's character.
DEFAULT_PAIRS = {
    "gu-en": LabelAlphabet(native_char="G"),
    "ta-en": LabelAlphabet(native_char="T"),
    "te-en": LabelAlphabet(native_char="T"),
}


def load_alphabets(path):
    """Read a ``pair -> LabelAlphabet`` map from an INI-style sidecar.

    ::

        [gu-en]
        native = G
        english = E
        silence = S
    """
    parser = configparser.ConfigParser()
    if not parser.read(path, encoding="utf-8"):
        raise ConfigurationError(f"cannot read alphabet config {path}")
    pairs = {}
    for section in parser.sections():
        sec = parser[section]
        pairs[section] = LabelAlphabet(
            native_char=sec.get("native", "G"),
            english_char=sec.get("english", "E"),
            silence_char=sec.get("silence", "S"),
            apostrophe_char=sec.get("apostrophe", "′"),
        )
    return pairs


def write_alphabets(path, pairs):
    parser = configparser.ConfigParser()
    for name, alpha in sorted(pairs.items()):
        parser[name] = {
            "native": alpha.native_char,
            "english": alpha.english_char,
            "silence": alpha.silence_char,
            "apostrophe": alpha.apostrophe_char,
        }
    with open(path, "w", encoding="utf-8") as fh:
        parser.write(fh)


@dataclass(frozen=True)
class LanguageTranscript:
    chars: str
    alphabet: LabelAlphabet = LabelAlphabet()
    label_period_ms: float = DEFAULT_LABEL_PERIOD_MS

    def __len__(self):
        return len(self.chars)

    def __str__(self):
        return self.chars


@dataclass(frozen=True)
class LanguageSegment:
    lang: str
    start_char: int
    end_char: int
    start_frame: int
    end_frame: int

    @property
    def n_chars(self):
        return self.end_char - self.start_char

    @property
    def n_frames(self):
        return self.end_frame - self.start_frame


class UtteranceLabel(str, enum.Enum):
    MONOLINGUAL = "Monolingual"
    CODE_SWITCHED = "CodeSwitched"


def parse_transcript(text, alphabet=None, label_period_ms=DEFAULT_LABEL_PERIOD_MS):
    alphabet = alphabet or LabelAlphabet()
    text = text.strip()
    if not text:
        raise InvalidLabelError("empty transcript", index=0)
    allowed = set(alphabet.transcript_chars)
    for i, ch in enumerate(text):
        if ch not in allowed:
            raise InvalidLabelError(f"invalid label {ch!r} at index {i} (allowed: {''.join(sorted(allowed))})", index=i)
    return LanguageTranscript(text, alphabet, label_period_ms)


def segments(t, frames_per_char=1, n_frames=None):
    """Maximal same-language runs of ``t``, in order.

    Frame spans are ``[start_char * frames_per_char, end_char * frames_per_char)``
    clamped to ``n_frames`` (default: the transcript's own frame extent).
    """
    if frames_per_char < 1:
        raise ConfigurationError("frames_per_char must be >= 1")
    if n_frames is None:
        n_frames = len(t) * frames_per_char
    out = []
    pos = 0
    for lang, run in groupby(t.chars):
        length = sum(1 for _ in run)
        start, end = pos, pos + length
        out.append(
            LanguageSegment(
                lang=lang,
                start_char=start,
                end_char=end,
                start_frame=min(start * frames_per_char, n_frames),
                end_frame=min(end * frames_per_char, n_frames),
            )
        )
        pos = end
    return out


def english_segments(t, frames_per_char, n_frames):
    """English runs with frame spans; runs lying wholly past the audio are dropped."""
    english = t.alphabet.english_char
    out = []
    for seg in segments(t, frames_per_char, n_frames):
        if seg.lang != english:
            continue
        if seg.n_frames <= 0:
            log.warning("English run at chars [%d, %d) lies beyond the %d-frame audio", seg.start_char, seg.end_char, n_frames)
            continue
        out.append(seg)
    return out


def check_alignment(t, frames_per_char, n_frames, utt=None):
    """Warn when transcript and audio lengths disagree by more than one character."""
    covered = len(t) * frames_per_char
    if abs(covered - n_frames) > frames_per_char:
        log.warning(
            "%s: transcript covers %d frames but audio has %d; %s",
            utt or "utterance",
            covered,
            n_frames,
            "clamping segments" if covered > n_frames else "trailing frames treated as silence",
        )


def frame_labels(t, frames_per_char, n_frames):
    """Per-frame label characters; frames past the transcript are silence."""
    chars = [t.chars[i // frames_per_char] if i // frames_per_char < len(t) else t.alphabet.silence_char for i in range(n_frames)]
    return "".join(chars)


def utterance_label(t):
    """CodeSwitched iff both native and English characters occur."""
    present = set(t.chars)
    if t.alphabet.native_char in present and t.alphabet.english_char in present:
        return UtteranceLabel.CODE_SWITCHED
    return UtteranceLabel.MONOLINGUAL
