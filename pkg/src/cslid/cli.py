"""Command-line interface: ``cslid <subcommand> ...``.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 internal error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, dsp
from . import io as lidio
from .augment import AugmentPolicy, augment_batch
from .ctc import CtcAlphabet, beam_decode, greedy_decode, with_frame_path
from .errors import ConfigurationError, CslidError, DataError, StageError, TrainingError
from .evaluation import FramePrediction, format_table, score_task_a, score_task_b
from .labels import DEFAULT_PAIRS, LanguageTranscript, load_alphabets, parse_transcript, utterance_label
from .model import LR_SCHEDULES, ModelConfig, forward, train
from .pipeline import (
    ARMS,
    DEFAULT_WIDTHS,
    ReproduceConfig,
    featurize_entries,
    predict_slots,
    render_markdown,
    reproduce,
    sweep_beam,
    sweep_table,
    training_examples,
)
from .synth import SynthSpec, generate_dataset

log = logging.getLogger("cslid")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

FORMATS_HELP = """file formats (all binary containers little-endian):
  SPEC  spectrogram: b"SPEC" u32 n_frames u32 n_mels f64 hop_ms f64 window_ms,
        f32 row-major values, optional b"PLAN" u32 nbytes + JSON mask plan
  EMIT  emissions: b"EMIT" u32 T u32 alphabet_size, f32 row-major log-probs
  LIDM  checkpoint: b"LIDM" u32 nbytes + JSON model config, f32 tensors
        W_in, b_in, W_out, b_out
  manifest: JSON lines {"audio", "transcript", "pair", "task", "utt", "split"}
  alphabet sidecar: INI sections per pair with native/english/silence keys
  predictions: JSON lines {"utt", "label"} (task A) or {"utt", "labels"} (task B)

exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _framing_args(p):
    p.add_argument("--window-ms", type=float, default=20.0)
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--n-mels", type=int, default=80)
    p.add_argument("--n-fft", type=int, default=512)
    p.add_argument("--sample-rate", type=int, default=16000)


def _framing(args):
    return dsp.FramingConfig(window_ms=args.window_ms, hop_ms=args.hop_ms, n_mels=args.n_mels, n_fft=args.n_fft, sample_rate=args.sample_rate)


def build_parser():
    parser = _Parser(prog="cslid", description="Code-switched spoken language identification toolkit.",
                     epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"cslid {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker pool size (default: all CPUs)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--config", help="key=value file of flag overrides for the subcommand")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic code-switched corpus")
    p.add_argument("--spec", help="JSON synth spec (fields of SynthSpec)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-utterances", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("featurize", help="write SPEC log-mel files for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alphabets", help="alphabet sidecar (default: alphabet.ini next to the manifest)")
    p.add_argument("--emit-images", action="store_true", help="also write PGM images")
    _framing_args(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("augment", help="write clean + augmented SPEC pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", help="JSON augmentation policy (fields of AugmentPolicy)")
    p.add_argument("--language-mask", action="store_true", help="use transcript-derived time masks")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--alphabets")
    p.add_argument("--emit-images", action="store_true", help="write clean/augmented PGM pairs")
    _framing_args(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("train", help="train the frame classifier with CTC")
    p.add_argument("--manifest", required=True)
    p.add_argument("--policy", help="JSON augmentation policy; omit for no augmentation")
    p.add_argument("--arm", choices=ARMS, help="shortcut: baseline, specaug or langmask")
    p.add_argument("--split", default="train", help="manifest split to train on ('' = all)")
    p.add_argument("--out", required=True, help="checkpoint path (.lidm)")
    p.add_argument("--log-json", help="training log path (default: <out>.log.json)")
    p.add_argument("--alphabets")
    p.add_argument("--epochs", type=int, default=ModelConfig.epochs)
    p.add_argument("--learning-rate", type=float, default=ModelConfig.learning_rate)
    p.add_argument("--batch-size", type=int, default=ModelConfig.batch_size)
    p.add_argument("--lr-schedule", choices=LR_SCHEDULES, default=ModelConfig.lr_schedule)
    p.add_argument("--hidden-units", type=int, default=ModelConfig.hidden_units)
    p.add_argument("--context-frames", type=int, default=ModelConfig.context_frames)
    _framing_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="greedy or beam decoding of emissions")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--emissions", help="EMIT file or directory of *.emit")
    src.add_argument("--checkpoint", help="LIDM checkpoint; emissions computed from --manifest audio")
    p.add_argument("--manifest", help="audio for --checkpoint, and references for slot labels")
    p.add_argument("--split", default="", help="manifest split to decode ('' = all)")
    p.add_argument("--emit-dir", help="save computed emissions here")
    p.add_argument("--mode", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--beam-width", type=int, default=15)
    p.add_argument("--alphabet", help="alphabet sidecar")
    p.add_argument("--pair", default="gu-en")
    p.add_argument("--out", help="JSON-lines output (default stdout)")
    _framing_args(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--task", choices=["A", "B"], required=True)
    p.add_argument("--pred", required=True, help="JSON-lines predictions")
    p.add_argument("--ref", required=True, help="reference manifest")
    p.add_argument("--split", default="", help="restrict references to a split")
    p.add_argument("--per-class", action="store_true")
    p.add_argument("--ignore-silence", action="store_true")
    p.add_argument("--alphabets")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="Task-B accuracy over beam widths")
    p.add_argument("--emissions", required=True, help="directory of *.emit")
    p.add_argument("--ref", required=True, help="reference manifest")
    p.add_argument("--widths", default=",".join(map(str, DEFAULT_WIDTHS)))
    p.add_argument("--alphabets")
    p.add_argument("--hop-ms", type=float, default=10.0)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("reproduce", help="run the three-arm desk-scale experiment")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-utterances", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--test-snr-db", type=float)
    p.set_defaults(func=cmd_reproduce)
    return parser


# -- helpers ------------------------------------------------------------------


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc


def _alphabets(args, manifest=None):
    path = getattr(args, "alphabets", None) or getattr(args, "alphabet", None)
    if path:
        return load_alphabets(path)
    if manifest is not None:
        sidecar = Path(manifest).parent / "alphabet.ini"
        if sidecar.exists():
            return load_alphabets(sidecar)
    return dict(DEFAULT_PAIRS)


def _policy(args):
    policy = AugmentPolicy.from_dict(_read_json(args.policy)) if getattr(args, "policy", None) else AugmentPolicy()
    return replace(policy, rng_seed=args.seed if args.seed else policy.rng_seed)


def _entries(manifest, split=""):
    entries = lidio.read_manifest(manifest)
    if split and any(e.split for e in entries):
        entries = [e for e in entries if e.split == split]
    return entries


def _refs(args, entries):
    alphabets = _alphabets(args, args.ref)
    return {e.utt: parse_transcript(e.transcript, lidio.alphabet_for(e.pair, alphabets)) for e in entries}


def _emission_files(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.emit"))
        if not files:
            raise DataError(f"no .emit files in {p}")
        return {f.stem: f for f in files}
    return {p.stem: p}


def _write_lines(out, records):
    text = "".join(json.dumps(r, ensure_ascii=False, sort_keys=True) + "\n" for r in records)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args):
    spec = SynthSpec.from_dict(_read_json(args.spec)) if args.spec else SynthSpec()
    spec = replace(spec, rng_seed=args.seed)
    if args.n_utterances:
        spec = replace(spec, n_utterances=args.n_utterances)
    entries = generate_dataset(spec, args.out_dir)
    print(f"wrote {len(entries)} utterances and manifest.jsonl to {args.out_dir}")


def cmd_featurize(args):
    entries = lidio.read_manifest(args.manifest)
    utts = featurize_entries(entries, _framing(args), _alphabets(args, args.manifest), threads=args.threads)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for u in utts:
        lidio.write_spectrogram(out / f"{u.utt}.spec", u.spec)
        if args.emit_images:
            lidio.write_pgm(out / f"{u.utt}.pgm", u.spec)
    print(f"wrote {len(utts)} spectrograms to {out}")


def cmd_augment(args):
    entries = lidio.read_manifest(args.manifest)
    policy = _policy(args)
    if args.language_mask:
        policy = replace(policy, use_language_mask=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stream = augment_batch(entries, policy, _framing(args), _alphabets(args, args.manifest))
    for item in stream:
        lidio.write_spectrogram(out / f"{item.utt}.clean.spec", item.clean)
        lidio.write_spectrogram(out / f"{item.utt}.aug.spec", item.augmented, plan=item.plan)
        if args.emit_images:
            lo, hi = float(item.clean.values.min()), float(item.clean.values.max())
            lidio.write_pgm(out / f"{item.utt}.clean.pgm", item.clean, lo, hi)
            lidio.write_pgm(out / f"{item.utt}.aug.pgm", item.augmented, lo, hi)
    print(f"augmented {stream.n_emitted} utterances into {out} ({stream.n_skipped} skipped)")
    if stream.n_emitted == 0 and stream.n_skipped:
        raise DataError("every manifest entry failed to load")


def cmd_train(args):
    framing = _framing(args)
    entries = _entries(args.manifest, args.split)
    utts = featurize_entries(entries, framing, _alphabets(args, args.manifest), threads=args.threads)
    policy = _policy(args)
    if args.arm:
        arm = args.arm
    elif args.policy:
        arm = "langmask" if policy.use_language_mask else "specaug"
    else:
        arm = "baseline"
    config = ModelConfig(
        input_mels=framing.n_mels,
        hidden_units=args.hidden_units,
        context_frames=args.context_frames,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr_schedule=args.lr_schedule,
        rng_seed=args.seed,
    )
    examples = training_examples(utts, arm, policy)
    params, history = train(config, examples, on_epoch=lambda ep, loss: log.info("epoch %d mean loss %.4f", ep, loss))
    lidio.write_checkpoint(args.out, params)
    log_path = args.log_json or f"{args.out}.log.json"
    Path(log_path).write_text(
        json.dumps({"arm": arm, "config": config.to_dict(), "policy": policy.__dict__, "history": history}, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(f"wrote checkpoint {args.out} and training log {log_path}")


def cmd_decode(args):
    alphabets = _alphabets(args, args.manifest)
    refs = {}
    if args.manifest:
        entries = _entries(args.manifest, args.split)
        refs = {e.utt: parse_transcript(e.transcript, lidio.alphabet_for(e.pair, alphabets)) for e in entries}
    pair_alphabet = lidio.alphabet_for(args.pair, alphabets)
    ctc_alphabet = CtcAlphabet.from_labels(pair_alphabet)
    if args.checkpoint:
        if not args.manifest:
            raise ConfigurationError("--checkpoint requires --manifest")
        params = lidio.read_checkpoint(args.checkpoint)
        utts = featurize_entries(entries, _framing(args), alphabets, threads=args.threads)
        emissions = {u.utt: forward(params, u.spec) for u in utts}
        if args.emit_dir:
            Path(args.emit_dir).mkdir(parents=True, exist_ok=True)
            for utt, e in emissions.items():
                lidio.write_emissions(Path(args.emit_dir) / f"{utt}.emit", e)
    else:
        emissions = {utt: lidio.read_emissions(f) for utt, f in _emission_files(args.emissions).items()}
    fpc = dsp.frames_per_label_char(args.hop_ms, 200.0)
    records = []
    for utt in sorted(emissions):
        e = emissions[utt]
        result = greedy_decode(e, ctc_alphabet) if args.mode == "greedy" else beam_decode(e, args.beam_width, ctc_alphabet)
        rec = {"utt": utt, "sequence": result.sequence, "log_prob": result.log_prob}
        if utt in refs:
            result = with_frame_path(e, result)
            slots = predict_slots(result, refs[utt], fpc, ctc_alphabet)
            rec["labels"] = slots
            rec["label"] = utterance_label(LanguageTranscript(slots, refs[utt].alphabet)).value
        records.append(rec)
    _write_lines(args.out, records)


def _read_predictions(path):
    preds = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                preds[d["utt"]] = d
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: bad prediction line ({exc})") from exc
    return preds


def cmd_eval(args):
    entries = _entries(args.ref, args.split)
    refs = _refs(args, entries)
    raw = _read_predictions(args.pred)
    if args.task == "A":
        try:
            preds = {utt: d["label"] for utt, d in raw.items()}
        except KeyError as exc:
            raise DataError("task A predictions need a 'label' field") from exc
        report = score_task_a(preds, {utt: utterance_label(t) for utt, t in refs.items()})
    else:
        try:
            preds = {utt: FramePrediction(utt, d["labels"]) for utt, d in raw.items()}
        except KeyError as exc:
            raise DataError("task B predictions need a 'labels' field") from exc
        report = score_task_b(preds, refs, ignore_silence=args.ignore_silence)
    d = report.to_dict()
    if not args.per_class:
        d.pop("per_class", None)
    print(json.dumps(d, indent=2, sort_keys=True))
    rows = [(f"Task {args.task}", {"% Acc [%EER]": report.cell()})]
    if args.per_class:
        for c, r in report.per_class.items():
            rows.append((f"  class {c}", {"% Acc [%EER]": f"- [{100 * r.eer:.2f}]"}))
    print(format_table("", rows, ["% Acc [%EER]"]))


def cmd_sweep(args):
    try:
        widths = [int(w) for w in args.widths.split(",") if w.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad --widths {args.widths!r}") from exc
    entries = lidio.read_manifest(args.ref)
    files = _emission_files(args.emissions)
    entries = [e for e in entries if e.utt in files]
    if not entries:
        raise DataError("no manifest entries match the emission files")
    refs = _refs(args, entries)
    alphabet = CtcAlphabet.from_labels(next(iter(refs.values())).alphabet)
    emissions = {utt: lidio.read_emissions(files[utt]) for utt in refs}
    rows, best = sweep_beam(emissions, refs, widths, dsp.frames_per_label_char(args.hop_ms, 200.0), alphabet)
    print(sweep_table(rows, best))
    report = {"best_width": best, "rows": [{"width": r["width"], "task_b": r["report"].to_dict()} for r in rows]}
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_reproduce(args):
    config = ReproduceConfig(seed=args.seed)
    if args.n_utterances:
        config = replace(config, synth=replace(config.synth, n_utterances=args.n_utterances))
    if args.epochs:
        config = replace(config, model=replace(config.model, epochs=args.epochs))
    if args.test_snr_db is not None:
        config = replace(config, synth=replace(config.synth, test_noise_snr_db=args.test_snr_db))
    report = reproduce(args.out_dir, seed=args.seed, config=config)
    print(render_markdown(report))


# -- entry point -----------------------------------------------------------------


def _apply_config_file(parser, argv):
    """Re-parse with ``key=value`` overrides from ``--config`` as subcommand defaults."""
    # required flags may come from the file, so only --config is pre-parsed
    scan = argparse.ArgumentParser(add_help=False)
    scan.add_argument("--config")
    pre, rest = scan.parse_known_args(argv)
    if not pre.config:
        return parser.parse_args(argv)
    commands = parser._subparsers._group_actions[0].choices
    pre.command = next((a for a in rest if a in commands), None)
    if pre.command is None:
        return parser.parse_args(argv)
    overrides = {}
    for lineno, line in enumerate(Path(pre.config).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{pre.config}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        overrides[key.replace("-", "_")] = value
    sub = commands[pre.command]
    known = {a.dest: a for a in sub._actions}
    unknown = sorted(set(overrides) - set(known))
    if unknown:
        raise UsageError(f"{pre.config}: unknown keys for '{pre.command}': {unknown}")
    for key, value in overrides.items():
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            overrides[key] = value.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            overrides[key] = action.type(value)
        action.required = False
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        print(f"cslid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    log.info("resolved config: %s", json.dumps(resolved, sort_keys=True, default=str))
    try:
        args.func(args)
    except (ConfigurationError, UsageError) as exc:
        print(f"cslid: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"cslid: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, (DataError, OSError)) else EXIT_INTERNAL
    except (DataError, OSError) as exc:
        print(f"cslid: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, CslidError) as exc:
        print(f"cslid: error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code contract
        log.exception("internal error")
        print(f"cslid: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
