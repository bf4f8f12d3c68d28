"""Task-A (utterance) and Task-B (200 ms frame) scoring.

Accuracy is N/T.  The error rate reported as EER here is *not* the usual
threshold-swept equal error rate: it is ``(FRR + FAR) / 2`` with both rates
divided by the total number of datapoints T,

    FRR = TFR / T,   FAR = TFA / T,

where TFR counts positives predicted negative and TFA negatives predicted
positive.  It needs no scores and no threshold sweep, hence the name
:func:`paper_eer`.

For the three-way Task-B label set the rate is computed one-vs-rest per
class and macro-averaged.
"""

import enum
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field

from .ctc import CtcAlphabet, DecodeResult
from .errors import DimensionError, InsufficientOutputError, MissingPredictionError, UndefinedMetricError
from .labels import LanguageTranscript, UtteranceLabel

log = logging.getLogger(__name__)


class Granularity(str, enum.Enum):
    UTTERANCE = "Utterance"
    FRAME = "Frame"


@dataclass(frozen=True)
class FramePrediction:
    utt_id: str
    labels: str

    def __post_init__(self):
        if not self.labels:
            raise UndefinedMetricError(f"{self.utt_id}: empty frame prediction")


@dataclass(frozen=True)
class EerResult:
    tfr: int
    tfa: int
    frr: float
    far: float
    eer: float


@dataclass
class EvalReport:
    n_correct: int
    n_total: int
    accuracy: float
    tfr: int
    tfa: int
    frr: float
    far: float
    eer: float
    granularity: Granularity
    per_class: dict = field(default_factory=dict)

    def cell(self):
        """``"% Acc [%EER]"`` table cell."""
        return f"{100 * self.accuracy:.2f} [{100 * self.eer:.2f}]"

    def to_dict(self):
        d = asdict(self)
        d["granularity"] = self.granularity.value
        d["per_class"] = {k: asdict(v) for k, v in self.per_class.items()}
        return d


def accuracy(pred, ref):
    pred, ref = list(pred), list(ref)
    if not ref:
        raise UndefinedMetricError("accuracy of an empty reference is undefined")
    if len(pred) != len(ref):
        raise DimensionError(f"prediction length {len(pred)} != reference length {len(ref)}")
    return sum(p == r for p, r in zip(pred, ref)) / len(ref)


def paper_eer(pred, ref, positive):
    """``(FRR + FAR) / 2`` with both rates over the total datapoint count."""
    pred, ref = list(pred), list(ref)
    if not ref:
        raise UndefinedMetricError("error rates of an empty reference are undefined")
    if len(pred) != len(ref):
        raise DimensionError(f"prediction length {len(pred)} != reference length {len(ref)}")
    tfr = sum(1 for p, r in zip(pred, ref) if r == positive and p != positive)
    tfa = sum(1 for p, r in zip(pred, ref) if r != positive and p == positive)
    T = len(ref)
    # (tfr + tfa) / 2T equals (frr + far) / 2 but rounds once
    return EerResult(tfr, tfa, tfr / T, tfa / T, (tfr + tfa) / (2 * T))


eer = paper_eer


# -- frame alignment -----------------------------------------------------------


def slot_labels(frame_path, ctc_alphabet, frames_per_char, n_slots, silence_char="S"):
    """One transcript character per 200 ms slot from a frame-level CTC path.

    Each slot takes the majority symbol among its non-blank frames (ties go
    to the symbol earlier in the CTC alphabet).  Blank and apostrophe frames
    do not vote; a slot with no votes repeats the previous slot's label, or
    borrows the next voted slot's label at the start of the utterance, or is
    silence if nothing in the utterance voted.  Slots with no frames at all
    (audio shorter than the transcript) are left out.
    """
    voting = set(range(2, len(ctc_alphabet))) if len(ctc_alphabet) >= 5 else set(range(1, len(ctc_alphabet)))
    n_frames = len(frame_path)
    n_slots = min(n_slots, -(-n_frames // frames_per_char))
    winners = []
    for k in range(n_slots):
        counts = Counter(int(c) for c in frame_path[k * frames_per_char : (k + 1) * frames_per_char] if int(c) in voting)
        if counts:
            top = max(counts.values())
            winners.append(min(c for c, n in counts.items() if n == top))
        else:
            winners.append(None)
    filled = []
    last = None
    for w in winners:
        if w is not None:
            last = w
        filled.append(last)
    first = next((w for w in winners if w is not None), None)
    out = []
    for w in filled:
        w = w if w is not None else first
        out.append(ctc_alphabet.symbols[w] if w is not None else silence_char)
    return "".join(out)


def align_frames(decoded, ref, frames_per_char, ctc_alphabet=None):
    """Turn a decode (or a slot-level prediction) into ``(pred_chars, ref_chars)``.

    Lengths may still differ when the audio is shorter than the transcript;
    :func:`score_task_b` handles the remainder.
    """
    if isinstance(decoded, FramePrediction):
        return decoded.labels, ref.chars
    if isinstance(decoded, DecodeResult):
        if decoded.frame_path is None:
            raise InsufficientOutputError("decode result has no frame path; re-expand beam output with ctc.with_frame_path")
        alphabet = ctc_alphabet or CtcAlphabet.from_labels(ref.alphabet)
        pred = slot_labels(decoded.frame_path, alphabet, frames_per_char, len(ref), ref.alphabet.silence_char)
        return pred, ref.chars
    raise TypeError(f"cannot align {type(decoded).__name__}")


# -- task scoring ----------------------------------------------------------------


def _check_ids(pred_ids, ref_ids):
    missing = sorted(set(ref_ids) - set(pred_ids))
    extra = sorted(set(pred_ids) - set(ref_ids))
    if missing or extra:
        raise MissingPredictionError(f"prediction/reference mismatch: missing {missing}, unexpected {extra}", missing, extra)


def score_task_a(preds, refs):
    """Utterance-level scoring; ``preds``/``refs`` map utt id -> label.

    Labels may be :class:`UtteranceLabel` values or their strings.  The
    positive class for FRR/FAR is CodeSwitched.
    """
    preds, refs = dict(preds), dict(refs)
    _check_ids(preds, refs)
    ids = sorted(refs)
    p = [UtteranceLabel(preds[i]) for i in ids]
    r = [UtteranceLabel(refs[i]) for i in ids]
    acc = accuracy(p, r)
    e = paper_eer(p, r, UtteranceLabel.CODE_SWITCHED)
    n_correct = sum(a == b for a, b in zip(p, r))
    return EvalReport(n_correct, len(ids), acc, e.tfr, e.tfa, e.frr, e.far, e.eer, Granularity.UTTERANCE)


def _pair_slots(pred, ref, utt, ignore_silence, silence_char):
    """Pairs of (pred, ref) per reference slot; missing predictions are None."""
    if len(pred) != len(ref):
        log.info("%s: %d predicted slots vs %d reference slots", utt, len(pred), len(ref))
    pairs = [(pred[i] if i < len(pred) else None, ref[i]) for i in range(len(ref))]
    if ignore_silence:
        pairs = [(p, r) for p, r in pairs if r != silence_char]
    return pairs


def score_task_b(preds, refs, frames_per_char=None, ctc_alphabet=None, ignore_silence=False, classes=None):
    """Frame-level scoring pooled over utterances.

    ``preds`` maps utt id -> :class:`FramePrediction` or :class:`DecodeResult`
    (the latter needs ``frames_per_char``); ``refs`` maps utt id ->
    :class:`LanguageTranscript`.  Prediction slots beyond the reference are
    ignored; reference slots with no prediction count as errors.
    """
    preds = {getattr(p, "utt_id", k): p for k, p in dict(preds).items()}
    refs = dict(refs)
    _check_ids(preds, refs)
    pairs = []
    silence = "S"
    for utt in sorted(refs):
        ref = refs[utt]
        if not isinstance(ref, LanguageTranscript):
            raise TypeError("Task-B references must be LanguageTranscript objects")
        silence = ref.alphabet.silence_char
        pred = preds[utt]
        if isinstance(pred, DecodeResult):
            if frames_per_char is None:
                raise InsufficientOutputError("frames_per_char is required to score frame-level decodes")
            pred_chars, ref_chars = align_frames(pred, ref, frames_per_char, ctc_alphabet)
        else:
            pred_chars, ref_chars = align_frames(pred, ref, frames_per_char or 1)
        pairs.extend(_pair_slots(pred_chars, ref_chars, utt, ignore_silence, silence))
    if not pairs:
        raise UndefinedMetricError("no reference slots to score")
    T = len(pairs)
    n_correct = sum(1 for p, r in pairs if p == r)
    if classes is None:
        first = refs[sorted(refs)[0]].alphabet
        classes = first.transcript_chars
        if ignore_silence:
            classes = tuple(c for c in classes if c != silence)
    per_class = {}
    for c in classes:
        tfr = sum(1 for p, r in pairs if r == c and p != c)
        tfa = sum(1 for p, r in pairs if r != c and p == c)
        per_class[c] = EerResult(tfr, tfa, tfr / T, tfa / T, (tfr + tfa) / (2 * T))
    frr = sum(v.frr for v in per_class.values()) / len(per_class)
    far = sum(v.far for v in per_class.values()) / len(per_class)
    return EvalReport(
        n_correct=n_correct,
        n_total=T,
        accuracy=n_correct / T,
        tfr=sum(v.tfr for v in per_class.values()),
        tfa=sum(v.tfa for v in per_class.values()),
        frr=frr,
        far=far,
        eer=(frr + far) / 2,
        granularity=Granularity.FRAME,
        per_class=per_class,
    )


def format_table(title, rows, columns):
    """Aligned text table; ``rows`` is a list of ``(name, {column: cell})``."""
    header = [title] + list(columns)
    body = [[name] + [cells.get(c, "-") for c in columns] for name, cells in rows]
    widths = [max(len(str(r[i])) for r in [header] + body) for i in range(len(header))]

    def line(r):
        return " | ".join(str(v).ljust(w) for v, w in zip(r, widths))

    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(header), sep] + [line(r) for r in body])
