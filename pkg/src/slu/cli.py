"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 validation or usage error.
Verbosity is controlled by the SLU_LOG environment variable (DEBUG/INFO/...).
All randomness flows from --seed / config seeds, and artifacts are written
atomically, so re-running a pipeline with identical flags reproduces its
outputs byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import audio, data, metrics, synth
from .decode import decode_two_step
from .errors import ParseError, SluError, ValidationError
from .ioutil import atomic_write_text
from .model import JointModel, ModelConfig, load_checkpoint, save_checkpoint
from .subword import load_vocab, tokenize
from .train import StageConfig, TrainConfig, corpus_features, train

log = logging.getLogger("slu")

KNOWN_METRICS = ("wer", "slots-edit-f1", "span-f1", "intent-f1")


def _setup_logging() -> None:
    level = os.environ.get("SLU_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slu", description="Spoken language understanding toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse a manifest and check its invariants")
    p.add_argument("--manifest", required=True)

    p = sub.add_parser("tokenize", help="subword-tokenize a manifest")
    p.add_argument("--vocab", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output JSONL path (default: stdout)")

    p = sub.add_parser("score", help="score hypotheses against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--metrics", default="wer,slots-edit-f1,intent-f1")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--pretty", action="store_true")
    p.add_argument("--out", help="also write the JSON report to this path")

    p = sub.add_parser("wer", help="corpus word error rate only")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)

    p = sub.add_parser("augment", help="noise-augment a corpus at fixed SNR levels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--noise-dir", required=True)
    p.add_argument("--split", choices=("train", "test"), required=True)
    p.add_argument("--snr", default="0,10,20,30,40", help="comma-separated dB levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--random-offset", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train-toy", help="train the toy joint model")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--pretrain-manifest")
    p.add_argument("--out", default="ckpt.json")

    p = sub.add_parser("decode", help="two-step decoding to a hypothesis manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--beam-size", type=int)
    p.add_argument("--out", required=True)
    return parser


def _load_pairs(path: str):
    manifest = data.parse_manifest(path)
    return manifest, data.iter_pairs(manifest)


def cmd_validate(args) -> int:
    manifest = data.parse_manifest(args.manifest)
    conflicts = data.find_slot_conflicts(manifest)
    for word, labels in conflicts.items():
        log.warning("word %r carries multiple slot labels: %s", word, ",".join(labels))
    print(
        json.dumps(
            {
                "records": len(manifest.records),
                "slot_labels": sorted(manifest.slot_vocabulary),
                "intents": sorted(manifest.intent_vocabulary),
                "conflicting_words": len(conflicts),
            }
        )
    )
    return 0


def cmd_tokenize(args) -> int:
    vocab = load_vocab(args.vocab)
    manifest = data.parse_manifest(args.manifest)
    lines = []
    for rec in manifest.records:
        result = tokenize(rec.words, vocab)
        lines.append(json.dumps({"id": rec.id, "tokens": result.tokens, "first_index": result.first_index}))
    text = "".join(line + "\n" for line in lines)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def _score_report(refs_manifest, hyps_manifest, names: list[str], jobs: int) -> dict:
    refs = data.iter_pairs(refs_manifest)
    hyps = data.iter_pairs(hyps_manifest)
    if len(refs) != len(hyps):
        raise ValidationError(f"ref/hyp record counts differ: {len(refs)} vs {len(hyps)}")
    mismatched = sum(
        r.id != h.id for r, h in zip(refs_manifest.records, hyps_manifest.records)
    )
    if mismatched:
        log.warning("scoring pairs by position, but %d record ids differ between files", mismatched)
    report: dict = {}
    if "wer" in names:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                counts = list(pool.map(lambda p: metrics.edit_counts(p[0][0], p[1][0]), zip(refs, hyps)))
            total_ref = sum(len(r[0]) for r in refs)
            report["wer"] = sum(sum(c) for c in counts) / total_ref
        else:
            report["wer"] = metrics.corpus_wer([r[0] for r in refs], [h[0] for h in hyps])
    if "slots-edit-f1" in names:
        edit = metrics.slots_edit_f1(refs, hyps)
        report["slots_edit_f1"] = {
            "f1": edit.f1,
            "precision": edit.precision,
            "recall": edit.recall,
            "per_label": {k: vars(v) for k, v in sorted(edit.per_label.items())},
        }
    if "span-f1" in names:
        report["span_f1"] = metrics.span_slot_f1(refs, hyps).f1
    if "intent-f1" in names:
        report["intent_f1"] = metrics.intent_f1(
            [r.intent for r in refs_manifest.records],
            [h.intent for h in hyps_manifest.records],
        )
    return report


def cmd_score(args) -> int:
    names = [n.strip() for n in args.metrics.split(",") if n.strip()]
    unknown = [n for n in names if n not in KNOWN_METRICS]
    if unknown:
        raise ValidationError(f"unknown metric(s) {unknown}; choose from {KNOWN_METRICS}")
    refs_manifest = data.parse_manifest(args.refs)
    hyps_manifest = data.parse_manifest(args.hyps)
    report = _score_report(refs_manifest, hyps_manifest, names, args.jobs)
    if args.pretty:
        for key in ("wer", "span_f1", "intent_f1"):
            if key in report:
                print(f"{key:>14}: {report[key]:.4f}")
        if "slots_edit_f1" in report:
            print(f" slots_edit_f1: {report['slots_edit_f1']['f1']:.4f}")
            for label, tally in report["slots_edit_f1"]["per_label"].items():
                print(f"{label:>14}: tp={tally['tp']} fp={tally['fp']} fn={tally['fn']}")
    else:
        print(json.dumps(report))
    if args.out:
        atomic_write_text(args.out, json.dumps(report) + "\n")
    return 0


def cmd_wer(args) -> int:
    _, refs = _load_pairs(args.refs)
    _, hyps = _load_pairs(args.hyps)
    value = metrics.corpus_wer([r[0] for r in refs], [h[0] for h in hyps])
    print(json.dumps({"wer": value}))
    return 0


def cmd_augment(args) -> int:
    manifest = data.parse_manifest(args.manifest)
    pool = audio.NoisePool.from_directory(args.noise_dir)
    levels = tuple(float(s) for s in args.snr.split(","))
    spec = audio.AugmentSpec(
        snr_levels_db=levels,
        noises_per_clip=len(levels),
        seed=args.seed,
        random_offset=args.random_offset,
    )
    out_dir = Path(args.out)
    augmented, provenance = audio.augment_corpus(
        manifest, pool, spec, args.split, out_dir, jobs=args.jobs
    )
    data.write_manifest(augmented, out_dir / "manifest.jsonl")
    atomic_write_text(out_dir / "provenance.json", json.dumps(provenance, indent=2) + "\n")
    print(json.dumps({"records": len(augmented.records), "out": str(out_dir)}))
    return 0


def _train_configs(obj: dict, config_dir: Path):
    stages = [StageConfig(**stage) for stage in obj.get("stages", [])]
    train_cfg = TrainConfig(
        seed=obj.get("seed", 0),
        beam_size=obj.get("beam_size", 5),
        mode=obj.get("mode", "e2e"),
        stages=stages,
    )
    feature = audio.FeatureConfig(**obj.get("feature", {}))
    model_cfg = ModelConfig(feature_dim=feature.num_bands, **obj.get("model", {}))
    asr_vocab = load_vocab(config_dir / obj["asr_vocab"]) if "asr_vocab" in obj else synth.asr_vocab()
    nlu_vocab = load_vocab(config_dir / obj["nlu_vocab"]) if "nlu_vocab" in obj else synth.nlu_vocab()
    return train_cfg, feature, model_cfg, asr_vocab, nlu_vocab


def cmd_train_toy(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.config}: invalid JSON: {exc}") from exc
    try:
        train_cfg, feature, model_cfg, asr_vocab, nlu_vocab = _train_configs(obj, Path(args.config).parent)
    except (TypeError, KeyError) as exc:
        raise ValidationError(f"{args.config}: bad train config: {exc}") from exc
    manifest = data.parse_manifest(args.manifest)
    pretrain = data.parse_manifest(args.pretrain_manifest) if args.pretrain_manifest else None
    slot_tags = sorted({tag for rec in manifest.records for tag in rec.slots})
    intents = sorted(manifest.intent_vocabulary)
    model = JointModel(model_cfg, asr_vocab, nlu_vocab, slot_tags, intents)
    model.init_params(train_cfg.seed)
    history = train(model, manifest, train_cfg, feature, pretrain)
    save_checkpoint(model, args.out, feature, train_cfg.beam_size)
    atomic_write_text(
        Path(args.out).with_suffix(".log.jsonl"),
        "".join(json.dumps(row) + "\n" for row in history),
    )
    final = history[-1] if history else {}
    print(json.dumps({"checkpoint": args.out, "epochs": len(history), "final": final}))
    return 0


def cmd_decode(args) -> int:
    model, feature, beam_size = load_checkpoint(args.ckpt)
    if args.beam_size:
        beam_size = args.beam_size
    manifest = data.parse_manifest(args.manifest)
    features = corpus_features(manifest, feature)
    lines = []
    for rec, feats in zip(manifest.records, features):
        result = decode_two_step(model, feats, beam_size=beam_size)
        lines.append(
            data.record_to_json(
                data.Utterance(rec.id, result.words, result.slots, result.intent)
            )
        )
    atomic_write_text(args.out, "".join(line + "\n" for line in lines))
    print(json.dumps({"records": len(lines), "out": args.out}))
    return 0


_COMMANDS = {
    "validate": cmd_validate,
    "tokenize": cmd_tokenize,
    "score": cmd_score,
    "wer": cmd_wer,
    "augment": cmd_augment,
    "train-toy": cmd_train_toy,
    "decode": cmd_decode,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    log.info("resolved config: %s", json.dumps({k: v for k, v in vars(args).items()}))
    try:
        return _COMMANDS[args.command](args)
    except (ValidationError, ParseError) as exc:
        print(f"slu {args.command}: {exc}", file=sys.stderr)
        return 2
    except SluError as exc:
        print(f"slu {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"slu {args.command}: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())
