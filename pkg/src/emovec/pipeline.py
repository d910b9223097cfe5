"""Experiment configuration and reproducible end-to-end pipeline runs.

One TOML file drives a full reproduction: corpus generation, embedder
training, acoustic-model pre-training, per-emotion fine-tuning, vector
extraction, and scenario evaluation. Every produced artifact's meta embeds
the config hash and the hashes of its inputs, so a finished run directory
is auditable offline, and re-running the same config yields bit-identical
bytes.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .arith import EmotionVector, extract_vector, save_vector
from .corpus import Corpus, CorpusConfig, build_corpus, save_corpus
from .embedder import (
    EmbedderHyper,
    EmbedderModel,
    SpeakerVectorEntry,
    save_speaker_vectors,
    speaker_vector_table,
    train_embedder,
)
from .errors import ValidationError
from .evaluate import (
    DEFAULT_ALPHAS,
    ScenarioReport,
    ScenarioSpec,
    run_scenario,
    write_report,
)
from .model import ModelConfig, TrainHyper, init_params, train
from .params import ParameterSet, save


@dataclass(frozen=True)
class EvalSettings:
    n_sentences: int = 10
    alphas: tuple[float, ...] = DEFAULT_ALPHAS


@dataclass(frozen=True)
class ScenarioTemplate:
    """Scenario entry from the config; targets default per case."""

    case: str
    vector_source: str = "speaker_agnostic"
    source_speaker: str | None = None
    targets: tuple[str, ...] | None = None
    emotions: tuple[str, ...] | None = None

    def slug(self) -> str:
        parts = [self.case, self.vector_source]
        if self.source_speaker:
            parts.append(self.source_speaker)
        return "_".join(parts)


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: CorpusConfig
    corpus_seed: int
    model: ModelConfig
    init_seed: int
    embedder_seed: int
    embedder_hyper: EmbedderHyper
    pretrain: TrainHyper
    finetune: TrainHyper
    evaluation: EvalSettings
    scenarios: tuple[ScenarioTemplate, ...]
    output_dir: str

    def to_dict(self) -> dict:
        return {
            "corpus": {
                "seed": self.corpus_seed,
                "neutral_only_speakers": self.corpus.neutral_only_speakers,
                "emotional_speakers": self.corpus.emotional_speakers,
                "unseen_speakers": self.corpus.unseen_speakers,
                "utterances_per_speaker": self.corpus.utterances_per_speaker,
                "emotions": list(self.corpus.emotions),
                "emotional_intensity": self.corpus.emotional_intensity,
                "noise_sigma": self.corpus.noise_sigma,
                "vocab": self.corpus.vocab,
                "min_tokens": self.corpus.min_tokens,
                "max_tokens": self.corpus.max_tokens,
                "train_fraction": self.corpus.train_fraction,
                "val_fraction": self.corpus.val_fraction,
            },
            "model": {
                "vocab": self.model.vocab,
                "embed_dim": self.model.embed_dim,
                "hidden": self.model.hidden,
                "speaker_dim": self.model.speaker_dim,
                "feature_dim": self.model.feature_dim,
            },
            "init": {"seed": self.init_seed},
            "embedder": {
                "seed": self.embedder_seed,
                "steps": self.embedder_hyper.steps,
                "learning_rate": self.embedder_hyper.learning_rate,
                "momentum": self.embedder_hyper.momentum,
            },
            "train": {
                "pretrain": _hyper_dict(self.pretrain),
                "finetune": _hyper_dict(self.finetune),
            },
            "evaluation": {
                "n_sentences": self.evaluation.n_sentences,
                "alphas": list(self.evaluation.alphas),
            },
            "scenarios": [
                {
                    "case": sc.case,
                    "vector_source": sc.vector_source,
                    "source_speaker": sc.source_speaker,
                    "targets": list(sc.targets) if sc.targets else None,
                    "emotions": list(sc.emotions) if sc.emotions else None,
                }
                for sc in self.scenarios
            ],
            "output": {"dir": self.output_dir},
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _hyper_dict(hyper: TrainHyper) -> dict:
    return {
        "steps": hyper.steps,
        "batch_size": hyper.batch_size,
        "learning_rate": hyper.learning_rate,
        "momentum": hyper.momentum,
        "seed": hyper.seed,
    }


def _require(section: Mapping, key: str, where: str):
    if key not in section:
        raise ValidationError(f"config: missing key {key!r} in [{where}]")
    return section[key]


def load_experiment_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment config.

    Seeds are never defaulted: every phase's seed must be written out in
    the file so runs are reproducible by inspection.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)

    corpus_sec = _require(doc, "corpus", "corpus")
    corpus_seed = int(_require(corpus_sec, "seed", "corpus"))
    corpus_kwargs = {
        k: corpus_sec[k]
        for k in (
            "neutral_only_speakers",
            "emotional_speakers",
            "unseen_speakers",
            "utterances_per_speaker",
            "emotional_intensity",
            "noise_sigma",
            "vocab",
            "min_tokens",
            "max_tokens",
            "train_fraction",
            "val_fraction",
        )
        if k in corpus_sec
    }
    if "emotions" in corpus_sec:
        corpus_kwargs["emotions"] = tuple(corpus_sec["emotions"])
    corpus = CorpusConfig(**corpus_kwargs)

    model_sec = doc.get("model", {})
    model = ModelConfig(
        vocab=model_sec.get("vocab", corpus.vocab),
        embed_dim=model_sec.get("embed_dim", 16),
        hidden=model_sec.get("hidden", 64),
        speaker_dim=model_sec.get("speaker_dim", 16),
        feature_dim=model_sec.get("feature_dim", 11),
    )
    if model.vocab != corpus.vocab:
        raise ValidationError(
            f"config: model vocab {model.vocab} != corpus vocab {corpus.vocab}"
        )

    init_seed = int(_require(doc.get("init", {}), "seed", "init"))
    emb_sec = doc.get("embedder", {})
    embedder_seed = int(_require(emb_sec, "seed", "embedder"))
    embedder_hyper = EmbedderHyper(
        steps=emb_sec.get("steps", 400),
        learning_rate=emb_sec.get("learning_rate", 0.05),
        momentum=emb_sec.get("momentum", 0.9),
    )

    train_sec = _require(doc, "train", "train")

    def hyper_from(name: str) -> TrainHyper:
        sec = _require(train_sec, name, f"train.{name}")
        return TrainHyper(
            steps=int(_require(sec, "steps", f"train.{name}")),
            batch_size=sec.get("batch_size", 32),
            learning_rate=sec.get("learning_rate", 0.01),
            momentum=sec.get("momentum", 0.9),
            seed=int(_require(sec, "seed", f"train.{name}")),
        )

    pretrain = hyper_from("pretrain")
    finetune = hyper_from("finetune")

    eval_sec = doc.get("evaluation", {})
    evaluation = EvalSettings(
        n_sentences=eval_sec.get("n_sentences", 10),
        alphas=tuple(eval_sec.get("alphas", list(DEFAULT_ALPHAS))),
    )

    scenarios = []
    for i, sc in enumerate(doc.get("scenario", [])):
        scenarios.append(
            ScenarioTemplate(
                case=_require(sc, "case", f"scenario[{i}]"),
                vector_source=sc.get("vector_source", "speaker_agnostic"),
                source_speaker=sc.get("source_speaker"),
                targets=tuple(sc["targets"]) if "targets" in sc else None,
                emotions=tuple(sc["emotions"]) if "emotions" in sc else None,
            )
        )
    if not scenarios:
        raise ValidationError("config: at least one [[scenario]] entry is required")

    output_dir = _require(doc.get("output", {}), "dir", "output")
    return ExperimentConfig(
        corpus=corpus,
        corpus_seed=corpus_seed,
        model=model,
        init_seed=init_seed,
        embedder_seed=embedder_seed,
        embedder_hyper=embedder_hyper,
        pretrain=pretrain,
        finetune=finetune,
        evaluation=evaluation,
        scenarios=tuple(scenarios),
        output_dir=str(output_dir),
    )


def default_targets(case: str, corpus: Corpus) -> tuple[str, ...]:
    """Paper-shaped defaults: emotional speakers for same_spk, the first
    four neutral-only seen speakers for cross_seen, the unseen pair for
    cross_unseen."""
    if case == "same_spk":
        return corpus.emotional_speaker_ids
    if case == "cross_seen":
        return corpus.neutral_only_seen_ids[:4]
    if case == "cross_unseen":
        return corpus.unseen_speaker_ids
    raise ValidationError(f"unknown case {case!r}")


def resolve_scenario(
    template: ScenarioTemplate, corpus: Corpus, evaluation: EvalSettings
) -> ScenarioSpec:
    return ScenarioSpec(
        case=template.case,
        targets=template.targets or default_targets(template.case, corpus),
        emotions=template.emotions or corpus.config.emotions,
        alphas=evaluation.alphas,
        vector_source=template.vector_source,
        source_speaker=template.source_speaker,
        n_sentences=evaluation.n_sentences,
    )


# ---------------------------------------------------------------------------
# Pipeline stages (shared by the CLI subcommands and run_experiment)
# ---------------------------------------------------------------------------


def neutral_seen_split(corpus: Corpus, split: str):
    return tuple(
        u
        for u in corpus.splits[split]
        if u.emotion == "neutral" and corpus.profiles[u.speaker_id].seen
    )


def emotional_split(corpus: Corpus, split: str, emotion: str, speaker: str | None = None):
    return tuple(
        u
        for u in corpus.splits[split]
        if u.emotion == emotion and (speaker is None or u.speaker_id == speaker)
    )


def _vec_map(table: Mapping[str, SpeakerVectorEntry]) -> dict[str, object]:
    return {speaker: entry.embedding for speaker, entry in table.items()}


def pretrain_model(
    config: ExperimentConfig,
    corpus: Corpus,
    table: Mapping[str, SpeakerVectorEntry],
    embedder_hash: str = "",
) -> ParameterSet:
    """Multi-speaker neutral pre-training over all seen speakers."""
    init = init_params(config.model, config.init_seed)
    meta = {"scope": "multi", "config_hash": config.config_hash()}
    if embedder_hash:
        meta["embedder_hash"] = embedder_hash
    return train(
        init,
        neutral_seen_split(corpus, "train"),
        _vec_map(table),
        config.pretrain,
        role="pretrained",
        val_split=neutral_seen_split(corpus, "val"),
        config=config.model,
        meta_extra=meta,
    )


def finetune_model(
    config: ExperimentConfig,
    corpus: Corpus,
    table: Mapping[str, SpeakerVectorEntry],
    pre: ParameterSet,
    emotion: str,
    speaker: str | None = None,
    embedder_hash: str = "",
) -> ParameterSet:
    """Fine-tune on one emotion's data; optionally restricted to one speaker.

    Conditioning always uses the speakers' neutral-speech vectors from the
    table, matching the pre-training conditioning.
    """
    split = emotional_split(corpus, "train", emotion, speaker)
    if not split:
        raise ValidationError(
            f"no training utterances for emotion {emotion!r}"
            + (f" and speaker {speaker!r}" if speaker else "")
        )
    scope = "single" if speaker else "multi"
    meta = {
        "scope": scope,
        "emotion": emotion,
        "config_hash": config.config_hash(),
    }
    if embedder_hash:
        meta["embedder_hash"] = embedder_hash
    if speaker:
        meta["finetune_speaker"] = speaker
    return train(
        pre,
        split,
        _vec_map(table),
        config.finetune,
        role="finetuned",
        val_split=emotional_split(corpus, "val", emotion, speaker),
        config=config.model,
        meta_extra=meta,
    )


def stamp_vector(vector: EmotionVector, config_hash_hex: str) -> EmotionVector:
    return EmotionVector(dict(vector.tensors), {**dict(vector.meta), "config_hash": config_hash_hex})


@dataclass
class ExperimentResult:
    out_dir: Path
    config: ExperimentConfig
    corpus: Corpus
    embedder: EmbedderModel
    table: dict[str, SpeakerVectorEntry]
    pre: ParameterSet
    vectors_agnostic: dict[str, EmotionVector]
    vectors_single: dict[tuple[str, str], EmotionVector]  # (emotion, speaker)
    reports: dict[str, ScenarioReport]  # scenario slug -> report


def run_experiment(
    config: ExperimentConfig,
    out_dir=None,
    cases: Sequence[str] | None = None,
    workers: int = 1,
    log=lambda msg: None,
) -> ExperimentResult:
    """Run the full pipeline and write all artifacts under ``out_dir``.

    ``cases`` filters which scenario reports are produced; the training
    stages always run in full so artifacts stay identical across filtered
    and unfiltered invocations.
    """
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_hash = config.config_hash()

    log("building corpus")
    corpus = build_corpus(config.corpus, config.corpus_seed)
    save_corpus(corpus, out / "corpus", extra_meta={"config_hash": cfg_hash})

    log("training speaker embedder")
    embedder = train_embedder(corpus, config.embedder_seed, config.embedder_hyper)
    embedder = replace(embedder, meta={**dict(embedder.meta), "config_hash": cfg_hash})
    save(embedder.to_parameter_set(), out / "embedder.evc")

    table = speaker_vector_table(embedder, corpus)
    save_speaker_vectors(
        table,
        out / "speaker_vectors.json",
        extra_meta={"config_hash": cfg_hash, "embedder_hash": embedder.content_hash()},
    )

    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)
    log("pre-training acoustic model")
    pre = pretrain_model(config, corpus, table, embedder_hash=embedder.content_hash())
    save(pre, ckpt_dir / "pretrain.evc")

    needed_single = sorted(
        {
            (emotion, sc.source_speaker)
            for sc in config.scenarios
            if sc.vector_source == "single_speaker"
            for emotion in (sc.emotions or corpus.config.emotions)
        }
    )

    vectors_agnostic: dict[str, EmotionVector] = {}
    for emotion in corpus.config.emotions:
        log(f"fine-tuning ({emotion}, all emotional speakers)")
        ft = finetune_model(config, corpus, table, pre, emotion, embedder_hash=embedder.content_hash())
        save(ft, ckpt_dir / f"ft_{emotion}.evc")
        tau = stamp_vector(extract_vector(ft, pre, emotion), cfg_hash)
        vectors_agnostic[emotion] = tau
        save_vector(tau, ckpt_dir / f"tau_{emotion}_agnostic.evc")

    vectors_single: dict[tuple[str, str], EmotionVector] = {}
    for emotion, speaker in needed_single:
        log(f"fine-tuning ({emotion}, speaker {speaker})")
        ft = finetune_model(config, corpus, table, pre, emotion, speaker, embedder_hash=embedder.content_hash())
        save(ft, ckpt_dir / f"ft_{emotion}_single_{speaker}.evc")
        tau = stamp_vector(extract_vector(ft, pre, emotion), cfg_hash)
        vectors_single[(emotion, speaker)] = tau
        save_vector(tau, ckpt_dir / f"tau_{emotion}_single_{speaker}.evc")

    reports: dict[str, ScenarioReport] = {}
    for template in config.scenarios:
        if cases is not None and template.case not in cases:
            continue
        spec = resolve_scenario(template, corpus, config.evaluation)
        if template.vector_source == "single_speaker":
            vectors = {
                e: vectors_single[(e, template.source_speaker)] for e in spec.emotions
            }
        else:
            vectors = {e: vectors_agnostic[e] for e in spec.emotions}
        log(f"running scenario {template.slug()}")
        report = run_scenario(
            spec,
            pre,
            vectors,
            embedder,
            corpus,
            table,
            config=config.model,
            workers=workers,
            extra_meta={"config_hash": cfg_hash},
        )
        write_report(report, out / "scenarios" / template.slug())
        reports[template.slug()] = report

    return ExperimentResult(
        out_dir=out,
        config=config,
        corpus=corpus,
        embedder=embedder,
        table=table,
        pre=pre,
        vectors_agnostic=vectors_agnostic,
        vectors_single=vectors_single,
        reports=reports,
    )
