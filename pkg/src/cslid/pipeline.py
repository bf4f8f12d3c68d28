"""End-to-end orchestration: featurise, augment, train, decode, score.

``reproduce`` runs the desk-scale experiment with three training arms

* ``baseline``   clean spectrograms only
* ``specaug``    clean + one randomly SpecAugmented copy per utterance
* ``langmask``   clean + one copy whose time masks cover the English runs

and scores greedy and beam decodes of a noise-corrupted test split at the
utterance level (Task A) and the 200 ms frame level (Task B).

CTC targets are the transcript's language-run sequence, e.g. ``SSSGGGEEGG``
trains towards ``S G E G``: a frame classifier can emit a run's label on
every frame of the run, which collapses to exactly that target.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import groupby
from pathlib import Path

from . import dsp
from .augment import AugmentPolicy, apply_plan, plan_for, utterance_rng
from .ctc import CtcAlphabet, beam_decode, greedy_decode, with_frame_path
from .errors import CslidError, InvalidParameterError, StageError
from .evaluation import FramePrediction, align_frames, format_table, score_task_a, score_task_b
from .io import load_entry, write_checkpoint, write_emissions, write_manifest
from .labels import LanguageTranscript, utterance_label
from .model import ModelConfig, forward, train
from .synth import SynthSpec, generate_corpus

log = logging.getLogger(__name__)

ARMS = ("baseline", "specaug", "langmask")
ARM_TITLES = {"baseline": "Baseline", "specaug": "SpecAug", "langmask": "SpecAug + Lang Mask"}
DEFAULT_WIDTHS = (5, 10, 15, 20)


@dataclass
class Utterance:
    utt: str
    split: str
    spec: dsp.Spectrogram
    transcript: LanguageTranscript


def ctc_target(transcript, ctc_alphabet=None):
    """Language-run label sequence of a transcript, as CTC indices."""
    alphabet = ctc_alphabet or CtcAlphabet.from_labels(transcript.alphabet)
    return alphabet.encode("".join(ch for ch, _ in groupby(transcript.chars)))


def featurize_entries(entries, framing=None, alphabets=None, threads=1):
    """Load and featurise manifest entries, preserving order."""
    framing = framing or dsp.FramingConfig()

    def work(entry):
        spec, transcript = load_entry(entry, framing, alphabets)
        return Utterance(entry.utt, entry.split, spec, transcript)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, entries))
    return [work(e) for e in entries]


def training_examples(utts, arm, policy, ctc_alphabet=None):
    """``(spectrogram, target)`` pairs for one arm; augmented copies follow the clean set."""
    clean = [(u.spec, ctc_target(u.transcript, ctc_alphabet)) for u in utts]
    if arm == "baseline":
        return clean
    if arm not in ("specaug", "langmask"):
        raise InvalidParameterError(f"unknown arm {arm!r}")
    arm_policy = replace(policy, use_language_mask=(arm == "langmask"))
    augmented = []
    for i, u in enumerate(utts):
        plan = plan_for(arm_policy, u.spec, u.transcript, utterance_rng(arm_policy.rng_seed, i))
        augmented.append((apply_plan(u.spec, plan), clean[i][1]))
    return clean + augmented


def decode(params, spec, mode="greedy", beam_width=15, ctc_alphabet=None):
    """Emissions and a decode result carrying a frame path."""
    e = forward(params, spec)
    if mode == "greedy":
        return e, greedy_decode(e, ctc_alphabet)
    if mode == "beam":
        return e, with_frame_path(e, beam_decode(e, beam_width, ctc_alphabet))
    raise InvalidParameterError(f"unknown decode mode {mode!r}")


def predict_slots(result, transcript, frames_per_char, ctc_alphabet=None):
    pred, _ = align_frames(result, transcript, frames_per_char, ctc_alphabet)
    return pred


def score_decodes(results, utts, frames_per_char, ctc_alphabet=None):
    """Task-A and Task-B reports for ``{utt: DecodeResult}``."""
    refs_b = {u.utt: u.transcript for u in utts}
    slot_preds = {u.utt: FramePrediction(u.utt, predict_slots(results[u.utt], u.transcript, frames_per_char, ctc_alphabet)) for u in utts}
    task_b = score_task_b(slot_preds, refs_b)
    preds_a = {
        u.utt: utterance_label(LanguageTranscript(slot_preds[u.utt].labels, u.transcript.alphabet)) for u in utts
    }
    refs_a = {u.utt: utterance_label(u.transcript) for u in utts}
    task_a = score_task_a(preds_a, refs_a)
    return task_a, task_b, slot_preds


def sweep_beam(emissions, refs, widths=DEFAULT_WIDTHS, frames_per_char=20, ctc_alphabet=None):
    """Task-B accuracy/EER per beam width.

    ``emissions`` and ``refs`` map utt id to EmissionMatrix / LanguageTranscript.
    Returns ``(rows, best_width)`` with rows ``{"width", "report"}``; the best
    width maximises accuracy, smallest width on ties.
    """
    widths = list(widths)
    if not widths:
        raise InvalidParameterError("beam sweep needs at least one width")
    rows = []
    for w in widths:
        preds = {}
        for utt in sorted(refs):
            e = emissions[utt]
            result = with_frame_path(e, beam_decode(e, w, ctc_alphabet))
            preds[utt] = FramePrediction(utt, predict_slots(result, refs[utt], frames_per_char, ctc_alphabet))
        rows.append({"width": w, "report": score_task_b(preds, refs)})
    best = max(rows, key=lambda r: (r["report"].accuracy, -r["width"]))["width"]
    return rows, best


def sweep_table(rows, best):
    lines = [("width", "% Acc [%EER]", "")]
    for r in rows:
        lines.append((str(r["width"]), r["report"].cell(), "<- best" if r["width"] == best else ""))
    widths = [max(len(l[i]) for l in lines) for i in range(3)]
    return "\n".join(" | ".join(v.ljust(w) for v, w in zip(l, widths)).rstrip() for l in lines)


# -- reproduce ------------------------------------------------------------------


def _default_synth():
    return SynthSpec(n_utterances=200, test_noise_snr_db=0.0)


def _default_model():
    return ModelConfig()


def _default_policy():
    return AugmentPolicy()


@dataclass
class ReproduceConfig:
    seed: int = 42
    synth: SynthSpec = field(default_factory=_default_synth)
    model: ModelConfig = field(default_factory=_default_model)
    policy: AugmentPolicy = field(default_factory=_default_policy)
    framing: dsp.FramingConfig = field(default_factory=dsp.FramingConfig)
    beam_width: int = 15
    sweep_widths: tuple = DEFAULT_WIDTHS
    arms: tuple = ARMS

    def seeded(self):
        """Copy with every component seed derived from ``seed``."""
        return replace(
            self,
            synth=replace(self.synth, rng_seed=self.seed),
            model=replace(self.model, rng_seed=self.seed, input_mels=self.framing.n_mels),
            policy=replace(self.policy, rng_seed=self.seed),
        )

    def to_dict(self):
        return {
            "seed": self.seed,
            "synth": self.synth.to_dict(),
            "model": asdict(self.model),
            "policy": asdict(self.policy),
            "framing": asdict(self.framing),
            "beam_width": self.beam_width,
            "sweep_widths": list(self.sweep_widths),
            "arms": list(self.arms),
        }


class _Stage:
    def __init__(self, name, timings):
        self.name = name
        self.timings = timings

    def __enter__(self):
        log.info("stage %s ...", self.name)
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.start
        if exc is not None and not isinstance(exc, StageError) and isinstance(exc, (CslidError, OSError, ValueError, ArithmeticError)):
            raise StageError(self.name, exc) from exc
        return False


def run_experiment(config, out_dir=None, keep_artifacts=True):
    """Run every arm; returns the report dict (no wall-clock values inside)."""
    config = config.seeded()
    out = Path(out_dir) if out_dir is not None else None
    timings = {}
    alphabet = CtcAlphabet.from_labels(config.synth.alphabet)
    fpc = dsp.frames_per_label_char(config.framing, 200.0)

    with _Stage("synth", timings):
        corpus = list(generate_corpus(config.synth))
        if out is not None and keep_artifacts:
            _write_corpus(out / "corpus", corpus, config.synth.pair)

    with _Stage("featurize", timings):
        utts = [Utterance(utt, split, dsp.log_mel_spectrogram(clip, config.framing), tr) for utt, split, clip, tr in corpus]
        train_utts = [u for u in utts if u.split == "train"]
        test_utts = [u for u in utts if u.split == "test"]

    report = {"config": config.to_dict(), "arms": {}, "sweep": None}
    for arm in config.arms:
        with _Stage(f"train:{arm}", timings):
            examples = training_examples(train_utts, arm, config.policy, alphabet)
            params, history = train(config.model, examples)
            if out is not None and keep_artifacts:
                (out / "models").mkdir(parents=True, exist_ok=True)
                write_checkpoint(out / "models" / f"{arm}.lidm", params)
        with _Stage(f"decode:{arm}", timings):
            emissions = {u.utt: forward(params, u.spec) for u in test_utts}
            if out is not None and keep_artifacts:
                edir = out / "emissions" / arm
                edir.mkdir(parents=True, exist_ok=True)
                for utt, e in emissions.items():
                    write_emissions(edir / f"{utt}.emit", e)
            greedy = {utt: greedy_decode(e, alphabet) for utt, e in emissions.items()}
            beam = {utt: with_frame_path(e, beam_decode(e, config.beam_width, alphabet)) for utt, e in emissions.items()}
        with _Stage(f"score:{arm}", timings):
            ga, gb, _ = score_decodes(greedy, test_utts, fpc, alphabet)
            ba, bb, _ = score_decodes(beam, test_utts, fpc, alphabet)
            report["arms"][arm] = {
                "final_train_loss": history[-1]["mean_loss"],
                "n_train_examples": len(examples),
                "greedy": {"task_a": ga.to_dict(), "task_b": gb.to_dict()},
                "beam": {"task_a": ba.to_dict(), "task_b": bb.to_dict()},
            }
        if arm == config.arms[-1] and config.sweep_widths:
            with _Stage("sweep", timings):
                refs = {u.utt: u.transcript for u in test_utts}
                rows, best = sweep_beam(emissions, refs, config.sweep_widths, fpc, alphabet)
                report["sweep"] = {
                    "arm": arm,
                    "best_width": best,
                    "rows": [{"width": r["width"], "task_b": r["report"].to_dict()} for r in rows],
                }
    report["n_test_utterances"] = len(test_utts)
    report["n_train_utterances"] = len(train_utts)
    log.info("stage timings: %s", {k: round(v, 1) for k, v in timings.items()})
    return report


def _write_corpus(out, corpus, pair):
    from .io import ManifestEntry

    (out / "wav").mkdir(parents=True, exist_ok=True)
    entries = []
    for utt, split, clip, tr in corpus:
        wav = out / "wav" / f"{utt}.wav"
        dsp.save_wav(wav, clip)
        entries.append(ManifestEntry(utt, str(wav), tr.chars, pair, "B", split))
    write_manifest(out / "manifest.jsonl", entries)


def _task_rows(report, decoder, task):
    cells = {}
    for arm, res in report["arms"].items():
        r = res[decoder][task]
        cells[ARM_TITLES[arm]] = f"{100 * r['accuracy']:.2f} [{100 * r['eer']:.2f}]"
    return cells


def render_markdown(report):
    arms = [ARM_TITLES[a] for a in report["arms"]]
    parts = ["# Desk-scale code-switched LID experiment", ""]
    parts.append(f"seed {report['config']['seed']}, {report['n_train_utterances']} training and "
                 f"{report['n_test_utterances']} noise-corrupted test utterances.")
    parts.append("")
    for task, title in (("task_a", "Task A (utterance level)"), ("task_b", "Task B (200 ms frame level)")):
        rows = [(dec.capitalize(), _task_rows(report, dec, task)) for dec in ("greedy", "beam")]
        parts += [f"## {title}: % Acc [%EER]", "", "```", format_table("Decoder", rows, arms), "```", ""]
    if report.get("sweep"):
        s = report["sweep"]
        rows = [
            (str(r["width"]), {"% Acc [%EER]": f"{100 * r['task_b']['accuracy']:.2f} [{100 * r['task_b']['eer']:.2f}]",
                               "best": "*" if r["width"] == s["best_width"] else ""})
            for r in s["rows"]
        ]
        parts += [f"## Beam width sweep ({ARM_TITLES[s['arm']]}, Task B)", "", "```",
                  format_table("Width", rows, ["% Acc [%EER]", "best"]), "```", ""]
    return "\n".join(parts)


def reproduce(out_dir, seed=42, config=None):
    """Run the experiment and write ``report.json`` and ``report.md`` into ``out_dir``."""
    config = replace(config or ReproduceConfig(), seed=seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = run_experiment(config, out)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "report.md").write_text(render_markdown(report), encoding="utf-8")
    return report
