"""Command-line entry point: ``emovec <subcommand>``.

Thin sequential orchestration over the library modules. Every subcommand
reads and writes only the documented file formats; logs go to stderr and
data to files. Exit codes: 0 success, 1 validation error, 2 I/O error.
``EMOVEC_THREADS`` caps worker parallelism inside scenario evaluation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .arith import (
    EmotionVector,
    apply_vector,
    extract_vector,
    load_vector,
    save_vector,
    vector_stats,
)
from .corpus import build_corpus, load_corpus, save_corpus
from .embedder import (
    EmbedderModel,
    load_speaker_vectors,
    save_speaker_vectors,
    speaker_vector_table,
    train_embedder,
)
from .errors import EmovecError, ValidationError
from .evaluate import (
    IntensityEstimator,
    SynthUtterance,
    intensity_ordering_eval,
    secs_eval,
    synthesize,
)
from .model import config_from_params
from .params import load, save
from .pipeline import (
    finetune_model,
    load_experiment_config,
    pretrain_model,
    run_experiment,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def worker_count() -> int:
    """Worker cap from EMOVEC_THREADS (default 1)."""
    raw = os.environ.get("EMOVEC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ValidationError(f"EMOVEC_THREADS must be an integer, got {raw!r}") from exc


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the validation code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _load_table(path):
    return load_speaker_vectors(path)


def _table_embedder_hash(path) -> str:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return doc.get("meta", {}).get("embedder_hash", "")


def _speaker_entry(table, speaker_id: str):
    if speaker_id not in table:
        raise ValidationError(f"speaker {speaker_id!r} not in vector table (have {sorted(table)})")
    return table[speaker_id]


# --------------------------- subcommand bodies ---------------------------


def cmd_dataset_gen(args) -> int:
    config = load_experiment_config(args.config)
    out = Path(args.out) if args.out else Path(config.output_dir) / "corpus"
    corpus = build_corpus(config.corpus, config.corpus_seed)
    save_corpus(corpus, out, extra_meta={"config_hash": config.config_hash()})
    _log(f"wrote corpus ({sum(len(v) for v in corpus.splits.values())} utterances) to {out}")
    return EXIT_OK


def cmd_train_embedder(args) -> int:
    config = load_experiment_config(args.config)
    corpus = load_corpus(args.corpus)
    embedder = train_embedder(corpus, config.embedder_seed, config.embedder_hyper)
    meta = {**dict(embedder.meta), "config_hash": config.config_hash()}
    embedder = replace(embedder, meta=meta)
    save(embedder.to_parameter_set(), args.out)
    table = speaker_vector_table(embedder, corpus)
    save_speaker_vectors(
        table,
        args.vectors,
        extra_meta={"config_hash": config.config_hash(), "embedder_hash": embedder.content_hash()},
    )
    _log(f"embedder holdout accuracy: {embedder.meta.get('holdout_accuracy')}")
    _log(f"wrote {args.out} and {args.vectors}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    config = load_experiment_config(args.config)
    corpus = load_corpus(args.corpus)
    table = _load_table(args.vectors)
    params = pretrain_model(
        config, corpus, table, embedder_hash=_table_embedder_hash(args.vectors)
    )
    save(params, args.out)
    _log(
        f"pre-trained {config.pretrain.steps} steps; "
        f"val loss {params.meta.get('final_val_loss')}; wrote {args.out}"
    )
    return EXIT_OK


def cmd_finetune(args) -> int:
    config = load_experiment_config(args.config)
    corpus = load_corpus(args.corpus)
    table = _load_table(args.vectors)
    pre = load(args.init)
    params = finetune_model(
        config,
        corpus,
        table,
        pre,
        args.emotion,
        args.speaker,
        embedder_hash=_table_embedder_hash(args.vectors),
    )
    save(params, args.out)
    _log(
        f"fine-tuned on {args.emotion}"
        + (f" (speaker {args.speaker})" if args.speaker else "")
        + f"; val loss {params.meta.get('final_val_loss')}; wrote {args.out}"
    )
    return EXIT_OK


def cmd_extract_vector(args) -> int:
    emo = load(args.emo)
    pre = load(args.pre)
    tau = extract_vector(emo, pre, args.label)
    save_vector(tau, args.out)
    _log(f"extracted {args.label} vector (scope {tau.scope}); wrote {args.out}")
    return EXIT_OK


def cmd_apply(args) -> int:
    target = load(args.target)
    tau = load_vector(args.vector)
    merged = apply_vector(target, tau, args.alpha)
    save(merged, args.out)
    _log(f"applied {tau.label or 'vector'} at alpha={args.alpha}; wrote {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    params = load(args.params)
    table = _load_table(args.vectors)
    entry = _speaker_entry(table, args.speaker)
    corpus = load_corpus(args.corpus)
    sentences = corpus.test_sentences(args.num_sentences)
    batch = synthesize(params, sentences, entry.embedding, config_from_params(params))
    with open(args.out, "w", encoding="utf-8") as fh:
        for synth in batch:
            record = {
                "speaker": args.speaker,
                "tokens": list(synth.tokens),
                "frames": [list(row) for row in synth.frames],
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    _log(f"synthesized {len(batch)} sentences for {args.speaker}; wrote {args.out}")
    return EXIT_OK


def _read_synth(path) -> list[SynthUtterance]:
    batch = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            batch.append(
                SynthUtterance(tuple(rec["tokens"]), np.asarray(rec["frames"], dtype=np.float64))
            )
    if not batch:
        raise ValidationError(f"{path}: no synthesized utterances")
    return batch


def cmd_eval_secs(args) -> int:
    embedder = EmbedderModel.from_parameter_set(load(args.embedder))
    emotional = _read_synth(args.emotional)
    neutral = _read_synth(args.neutral)
    summary = secs_eval(emotional, neutral, embedder)
    doc = {
        "mean": summary.mean,
        "halfwidth": summary.halfwidth,
        "per_sentence": list(summary.per_sentence),
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _log(f"SECS mean {summary.mean:.4f} ± {summary.halfwidth:.4f}; wrote {args.out}")
    return EXIT_OK


def cmd_eval_intensity(args) -> int:
    corpus = load_corpus(args.corpus)
    estimator = IntensityEstimator.from_corpus(corpus)
    if args.emotion not in estimator.directions:
        raise ValidationError(
            f"emotion {args.emotion!r} not in corpus emotions {sorted(estimator.directions)}"
        )
    per_alpha = {}
    for item in args.synth:
        if "=" not in item:
            raise ValidationError(f"--synth expects ALPHA=PATH, got {item!r}")
        alpha_text, path = item.split("=", 1)
        try:
            alpha = float(alpha_text)
        except ValueError as exc:
            raise ValidationError(f"--synth alpha {alpha_text!r} is not a number") from exc
        per_alpha[alpha] = _read_synth(path)
    neutral = _read_synth(args.neutral)
    result = intensity_ordering_eval(per_alpha, estimator, args.emotion, neutral)
    doc = {
        "emotion": args.emotion,
        "alphas": sorted(per_alpha),
        "confusion": [list(row) for row in result.confusion],
        "mean_diagonal": result.mean_diagonal,
        "monotone_fraction": result.monotone_fraction,
        "scores": [list(row) for row in result.scores],
    }
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _log(
        f"mean diagonal {result.mean_diagonal:.4f}, "
        f"monotone fraction {result.monotone_fraction:.4f}; wrote {args.out}"
    )
    return EXIT_OK


def cmd_run_scenario(args) -> int:
    config = load_experiment_config(args.config)
    cases = [args.case] if args.case else None
    result = run_experiment(
        config,
        out_dir=args.out,
        cases=cases,
        workers=worker_count(),
        log=_log,
    )
    for slug, report in sorted(result.reports.items()):
        for label in sorted(report.emotions):
            ev = report.emotions[label]
            _log(
                f"{slug}/{label}: SECS {ev.secs_own_mean:.4f} ± {ev.secs_own_halfwidth:.4f}, "
                f"margin {ev.secs_margin:.4f}"
            )
    _log(f"reports under {result.out_dir / 'scenarios'}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    params = load(args.path)
    print(f"{args.path}: {len(params.tensors)} tensors, {params.num_values()} values")
    for key in sorted(params.meta):
        print(f"  meta {key} = {params.meta[key]}")
    for name, entry in params.tensors.items():
        print(f"  {name}: shape {list(entry.shape)}")
    if args.stats:
        stats = vector_stats(EmotionVector(dict(params.tensors), {}))
        doc = stats.to_dict()
        print(
            f"  global l2={doc['global']['l2_norm']:.6g} "
            f"max|v|={doc['global']['max_abs']:.6g} "
            f"near-zero={doc['global']['near_zero_fraction']:.4f}"
        )
        for name in sorted(doc["per_tensor"]):
            st = doc["per_tensor"][name]
            print(
                f"  {name}: l2={st['l2_norm']:.6g} max|v|={st['max_abs']:.6g} "
                f"near-zero={st['near_zero_fraction']:.4f}"
            )
    return EXIT_OK


# --------------------------- parser wiring ---------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emovec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"emovec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("dataset-gen", help="generate the synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("-o", "--out", help="corpus directory (default: <output.dir>/corpus)")
    p.set_defaults(func=cmd_dataset_gen)

    p = sub.add_parser("train-embedder", help="train the speaker embedder and vector table")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("-o", "--out", required=True, help="embedder checkpoint (.evc)")
    p.add_argument("--vectors", required=True, help="speaker vector table output (.json)")
    p.set_defaults(func=cmd_train_embedder)

    p = sub.add_parser("pretrain", help="pre-train the acoustic model on neutral data")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="fine-tune on one emotion's data")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--init", required=True, help="pre-trained checkpoint to start from")
    p.add_argument("--emotion", required=True)
    p.add_argument("--speaker", help="restrict to one speaker (single-speaker baseline)")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("extract-vector", help="emotion vector = fine-tuned minus pre-trained")
    p.add_argument("--emo", required=True)
    p.add_argument("--pre", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_extract_vector)

    p = sub.add_parser("apply", help="merge: target + alpha * vector")
    p.add_argument("--target", required=True)
    p.add_argument("--vector", required=True)
    p.add_argument("--alpha", required=True, type=float)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("synth", help="synthesize feature frames for test sentences")
    p.add_argument("--params", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--speaker", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--num-sentences", type=int, default=10)
    p.add_argument("-o", "--out", required=True, help="synthesized frames (.jsonl)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval-secs", help="speaker cosine similarity between two syntheses")
    p.add_argument("--emotional", required=True)
    p.add_argument("--neutral", required=True)
    p.add_argument("--embedder", required=True)
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_eval_secs)

    p = sub.add_parser("eval-intensity", help="intensity ordering confusion matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--emotion", required=True)
    p.add_argument("--neutral", required=True, help="neutral baseline synthesis (.jsonl)")
    p.add_argument(
        "--synth",
        required=True,
        action="append",
        help="ALPHA=PATH synthesis file; pass three times",
    )
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_eval_intensity)

    p = sub.add_parser("run-scenario", help="full pipeline + scenario reports from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--case", choices=["same_spk", "cross_seen", "cross_unseen"])
    p.add_argument("--out", help="override the config output directory")
    p.set_defaults(func=cmd_run_scenario)

    p = sub.add_parser("inspect", help="show checkpoint contents")
    p.add_argument("path")
    p.add_argument("--stats", action="store_true", help="include magnitude statistics")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EmovecError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _log(f"error: {exc}")
        return EXIT_VALIDATION
    except OSError as exc:
        _log(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
