"""End-to-end evaluation of emotion-intensity control.

Three use cases are covered, named by what the target speaker contributed
to training: ``same_spk`` (neutral and emotional data), ``cross_seen``
(neutral data only), and ``cross_unseen`` (no data at all). For each
target, emotion, and scaling factor the harness merges the emotion vector
into the pre-trained model, synthesizes a shared sentence set with the
target's neutral speaker vector, and computes two objective metrics:

* speaker consistency: cosine similarity (SECS) between embeddings of the
  emotional synthesis and the target's own neutral synthesis, compared
  against the mean similarity to every other speaker's neutral synthesis;
* intensity ordering: each sentence's syntheses at three scaling factors
  are ranked by projecting feature deltas onto a known per-emotion
  direction derived from the corpus generator's noise-free closed form
  (an automatic stand-in for human rank-ordering), accumulated into a
  row-stochastic weak/medium/strong confusion matrix.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .arith import EmotionVector, apply_vector, vector_hash, vector_stats
from .corpus import Corpus, render_features
from .embedder import EmbedderModel, SpeakerVectorEntry, embed_utterance, secs
from .errors import EmovecWarning, ValidationError
from .model import DEFAULT_CONFIG, ModelConfig, forward
from .params import ParameterSet, content_hash

SCHEMA_VERSION = 1
CASES = ("same_spk", "cross_seen", "cross_unseen")
VECTOR_SOURCES = ("speaker_agnostic", "single_speaker")
DEFAULT_ALPHAS = (0.1, 0.5, 0.9)
INTENSITY_SLOTS = ("weak", "medium", "strong")


@dataclass(frozen=True)
class SynthUtterance:
    """One synthesized sentence: token sequence plus predicted frames."""

    tokens: tuple[int, ...]
    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        object.__setattr__(self, "frames", frames)


def synthesize(
    params: ParameterSet,
    sentences: Sequence[Sequence[int]],
    speaker_vec,
    config: ModelConfig = DEFAULT_CONFIG,
) -> list[SynthUtterance]:
    return [
        SynthUtterance(tuple(sent), forward(params, sent, speaker_vec, config))
        for sent in sentences
    ]


@dataclass(frozen=True)
class IntensityEstimator:
    """Per-emotion unit directions in feature space.

    Each direction is the normalized mean, over a token sample, of the
    generator's noise-free features at intensity 1 minus intensity 0, so
    it depends only on the corpus definition, never on the trained model
    under evaluation.
    """

    directions: Mapping[str, np.ndarray]

    def __post_init__(self):
        frozen = {}
        for label, g in self.directions.items():
            g = np.asarray(g, dtype=np.float64)
            if abs(np.linalg.norm(g) - 1.0) > 1e-9:
                raise ValidationError(f"direction for {label!r} must be unit-norm")
            g.flags.writeable = False
            frozen[label] = g
        object.__setattr__(self, "directions", frozen)

    @classmethod
    def from_corpus(cls, corpus: Corpus) -> "IntensityEstimator":
        speaker = corpus.profiles[sorted(corpus.profiles)[0]]
        tokens = list(range(corpus.config.vocab))
        directions = {}
        for label in corpus.config.emotions:
            transform = corpus.transforms[label]
            hot = render_features(tokens, speaker, transform, 1.0, corpus.token_table)
            cold = render_features(tokens, speaker, transform, 0.0, corpus.token_table)
            delta = (hot - cold).mean(axis=0)
            norm = np.linalg.norm(delta)
            if norm == 0.0:
                raise ValidationError(f"emotion {label!r} has a zero feature direction")
            directions[label] = delta / norm
        return cls(directions)

    def score(self, frames: np.ndarray, neutral_frames: np.ndarray, label: str) -> float:
        """Mean over tokens of the projection of (frames - neutral)."""
        g = self.directions[label]
        a = np.asarray(frames, dtype=np.float64)
        b = np.asarray(neutral_frames, dtype=np.float64)
        if a.shape != b.shape:
            raise ValidationError(f"frame shapes differ: {a.shape} vs {b.shape}")
        return float(((a - b) @ g).mean())


@dataclass(frozen=True)
class SecsSummary:
    per_sentence: tuple[float, ...]
    mean: float
    halfwidth: float  # 95% normal-approximation half-width


def _normal_halfwidth(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(1.96 * values.std(ddof=1) / np.sqrt(values.size))


def secs_eval(
    emotional: Sequence[SynthUtterance],
    neutral: Sequence[SynthUtterance],
    embedder: EmbedderModel,
) -> SecsSummary:
    """Per-sentence SECS between two syntheses of the same sentences."""
    if len(emotional) != len(neutral):
        raise ValidationError(
            f"sentence sets differ in size: {len(emotional)} vs {len(neutral)}"
        )
    for a, b in zip(emotional, neutral):
        if a.tokens != b.tokens:
            raise ValidationError("sentence sets differ (token mismatch)")
    scores = tuple(
        secs(embed_utterance(embedder, a.frames), embed_utterance(embedder, b.frames))
        for a, b in zip(emotional, neutral)
    )
    arr = np.asarray(scores)
    return SecsSummary(scores, float(arr.mean()), _normal_halfwidth(arr))


@dataclass(frozen=True)
class OrderingResult:
    confusion: tuple[tuple[float, ...], ...]  # rows: true slot, cols: perceived
    mean_diagonal: float
    monotone_fraction: float
    scores: tuple[tuple[float, ...], ...]  # per sentence, per alpha (ascending)


def _perceived_order(scores: Sequence[float]) -> list[int]:
    # Ties sort by descending true slot: tied slots come out misordered,
    # so a degenerate all-equal scorer cannot look accurate.
    return sorted(range(len(scores)), key=lambda k: (scores[k], -k))


def intensity_ordering_eval(
    per_alpha: Mapping[float, Sequence[SynthUtterance]],
    estimator: IntensityEstimator,
    label: str,
    neutral: Sequence[SynthUtterance],
) -> OrderingResult:
    """Rank syntheses of each sentence by projected intensity score.

    ``per_alpha`` maps three distinct scaling factors to syntheses of the
    same sentence list; ``neutral`` is the zero-vector baseline synthesis.
    The confusion matrix accumulates, per true slot (weak/medium/strong in
    ascending alpha order), where the slot landed in the perceived ranking.
    """
    alphas = sorted(per_alpha)
    if len(alphas) != 3:
        raise ValidationError(f"intensity ordering needs 3 distinct alphas, got {alphas}")
    n_sentences = len(neutral)
    if n_sentences == 0:
        raise ValidationError("intensity ordering needs at least one sentence")
    for alpha in alphas:
        batch = per_alpha[alpha]
        if len(batch) != n_sentences:
            raise ValidationError(f"alpha={alpha}: expected {n_sentences} sentences")
        for a, b in zip(batch, neutral):
            if a.tokens != b.tokens:
                raise ValidationError(f"alpha={alpha}: sentence sets differ (token mismatch)")

    counts = np.zeros((3, 3))
    monotone = 0
    all_scores = []
    for i in range(n_sentences):
        scores = [
            estimator.score(per_alpha[alpha][i].frames, neutral[i].frames, label)
            for alpha in alphas
        ]
        all_scores.append(tuple(scores))
        if scores[0] < scores[1] < scores[2]:
            monotone += 1
        order = _perceived_order(scores)
        for perceived_rank, true_slot in enumerate(order):
            counts[true_slot, perceived_rank] += 1.0
    confusion = counts / counts.sum(axis=1, keepdims=True)
    return OrderingResult(
        confusion=tuple(tuple(float(v) for v in row) for row in confusion),
        mean_diagonal=float(np.trace(confusion) / 3.0),
        monotone_fraction=monotone / n_sentences,
        scores=tuple(all_scores),
    )


# ---------------------------------------------------------------------------
# Scenario harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """One use case: targets, emotions, alphas, and the vector to apply."""

    case: str
    targets: tuple[str, ...]
    emotions: tuple[str, ...] = ("angry", "sad", "happy")
    alphas: tuple[float, ...] = DEFAULT_ALPHAS
    vector_source: str = "speaker_agnostic"
    source_speaker: str | None = None
    n_sentences: int = 10

    def __post_init__(self):
        if self.case not in CASES:
            raise ValidationError(f"case must be one of {CASES}, got {self.case!r}")
        if self.vector_source not in VECTOR_SOURCES:
            raise ValidationError(
                f"vector_source must be one of {VECTOR_SOURCES}, got {self.vector_source!r}"
            )
        if self.vector_source == "single_speaker" and not self.source_speaker:
            raise ValidationError("single_speaker vector source requires source_speaker")
        if not self.targets:
            raise ValidationError("scenario needs at least one target speaker")
        if not self.emotions:
            raise ValidationError("scenario needs at least one emotion")
        if len(set(self.alphas)) != len(self.alphas) or not self.alphas:
            raise ValidationError("alphas must be non-empty and distinct")
        if self.n_sentences < 1:
            raise ValidationError("n_sentences must be >= 1")
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "emotions", tuple(self.emotions))
        object.__setattr__(self, "alphas", tuple(sorted(float(a) for a in self.alphas)))

    def validate_against(self, corpus: Corpus, table: Mapping[str, SpeakerVectorEntry]) -> None:
        for target in self.targets:
            if target not in corpus.profiles:
                raise ValidationError(f"unknown target speaker {target!r}")
            profile = corpus.profiles[target]
            if self.case == "same_spk" and not profile.has_emotion_data:
                raise ValidationError(
                    f"same_spk target {target!r} has no emotional training data"
                )
            if self.case == "cross_seen" and (not profile.seen or profile.has_emotion_data):
                raise ValidationError(
                    f"cross_seen target {target!r} must be seen and neutral-only"
                )
            if self.case == "cross_unseen":
                if profile.seen:
                    raise ValidationError(f"cross_unseen target {target!r} is a seen speaker")
                entry = table.get(target)
                if entry is not None and entry.source_split == "train":
                    raise ValidationError(
                        f"unseen target {target!r} has a conditioning vector derived "
                        "from training data (contract breach)"
                    )


@dataclass
class EmotionEval:
    """Aggregated metrics for one emotion across a scenario's targets."""

    secs_own_mean: float
    secs_own_halfwidth: float
    secs_cross_mean: float
    secs_margin: float
    monotone_fraction: float | None
    mean_diagonal: float | None
    confusion: tuple[tuple[float, ...], ...] | None
    vector_stats: dict

    def __post_init__(self):
        if self.confusion is not None:
            for row in self.confusion:
                if abs(sum(row) - 1.0) > 1e-9:
                    raise ValidationError(f"confusion row {row} does not sum to 1")


@dataclass
class TargetEval:
    secs_own_mean: float
    secs_cross_mean: float
    secs_margin: float
    monotone_fraction: float | None


@dataclass
class ScenarioReport:
    """Metrics bundle for one scenario run; JSON round-trip safe."""

    case: str
    vector_source: str
    source_speaker: str | None
    alphas: tuple[float, ...]
    secs_alpha: float
    n_sentences: int
    emotions: dict[str, EmotionEval]
    per_target: dict[str, dict[str, TargetEval]]
    metadata: dict[str, str]
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "case": self.case,
            "vector_source": self.vector_source,
            "source_speaker": self.source_speaker,
            "alphas": list(self.alphas),
            "secs_alpha": self.secs_alpha,
            "n_sentences": self.n_sentences,
            "emotions": {
                label: {
                    "secs_own_mean": ev.secs_own_mean,
                    "secs_own_halfwidth": ev.secs_own_halfwidth,
                    "secs_cross_mean": ev.secs_cross_mean,
                    "secs_margin": ev.secs_margin,
                    "monotone_fraction": ev.monotone_fraction,
                    "mean_diagonal": ev.mean_diagonal,
                    "confusion": [list(row) for row in ev.confusion] if ev.confusion is not None else None,
                    "vector_stats": ev.vector_stats,
                }
                for label, ev in self.emotions.items()
            },
            "per_target": {
                target: {
                    label: {
                        "secs_own_mean": tv.secs_own_mean,
                        "secs_cross_mean": tv.secs_cross_mean,
                        "secs_margin": tv.secs_margin,
                        "monotone_fraction": tv.monotone_fraction,
                    }
                    for label, tv in by_emotion.items()
                }
                for target, by_emotion in self.per_target.items()
            },
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioReport":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported report schema {doc.get('schema_version')!r}")
        emotions = {
            label: EmotionEval(
                secs_own_mean=rec["secs_own_mean"],
                secs_own_halfwidth=rec["secs_own_halfwidth"],
                secs_cross_mean=rec["secs_cross_mean"],
                secs_margin=rec["secs_margin"],
                monotone_fraction=rec["monotone_fraction"],
                mean_diagonal=rec["mean_diagonal"],
                confusion=(
                    tuple(tuple(row) for row in rec["confusion"])
                    if rec["confusion"] is not None
                    else None
                ),
                vector_stats=rec["vector_stats"],
            )
            for label, rec in doc["emotions"].items()
        }
        per_target = {
            target: {
                label: TargetEval(
                    secs_own_mean=rec["secs_own_mean"],
                    secs_cross_mean=rec["secs_cross_mean"],
                    secs_margin=rec["secs_margin"],
                    monotone_fraction=rec["monotone_fraction"],
                )
                for label, rec in by_emotion.items()
            }
            for target, by_emotion in doc["per_target"].items()
        }
        return cls(
            case=doc["case"],
            vector_source=doc["vector_source"],
            source_speaker=doc["source_speaker"],
            alphas=tuple(doc["alphas"]),
            secs_alpha=doc["secs_alpha"],
            n_sentences=doc["n_sentences"],
            emotions=emotions,
            per_target=per_target,
            metadata=dict(doc["metadata"]),
        )


def run_scenario(
    spec: ScenarioSpec,
    pre: ParameterSet,
    vectors: Mapping[str, EmotionVector],
    embedder: EmbedderModel,
    corpus: Corpus,
    speaker_table: Mapping[str, SpeakerVectorEntry],
    config: ModelConfig = DEFAULT_CONFIG,
    workers: int = 1,
    extra_meta: Mapping[str, str] | None = None,
) -> ScenarioReport:
    """Run one use case end to end and aggregate its metrics.

    Speaker consistency is evaluated at the largest alpha; ordering metrics
    are included when the spec lists exactly three alphas. Cells
    (target x emotion) are independent and may evaluate on worker threads;
    accumulation order is fixed by the sorted cell list either way.
    """
    spec.validate_against(corpus, speaker_table)
    for label in spec.emotions:
        if label not in vectors:
            raise ValidationError(f"no emotion vector supplied for {label!r}")
    missing = [t for t in spec.targets if t not in speaker_table]
    if missing:
        raise ValidationError(f"no speaker vectors for targets: {missing}")

    sentences = corpus.test_sentences(spec.n_sentences)
    estimator = IntensityEstimator.from_corpus(corpus)
    secs_alpha = max(spec.alphas)

    # Neutral synthesis and embeddings for every speaker: the target's own
    # baseline plus the cross-speaker references.
    neutral_synth = {
        speaker_id: synthesize(pre, sentences, entry.embedding, config)
        for speaker_id, entry in sorted(speaker_table.items())
    }
    neutral_emb = {
        speaker_id: [embed_utterance(embedder, s.frames) for s in batch]
        for speaker_id, batch in neutral_synth.items()
    }

    # Merged parameter sets are target-independent: one per (emotion, alpha).
    merged: dict[tuple[str, float], ParameterSet] = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EmovecWarning)
        for label in spec.emotions:
            for alpha in spec.alphas:
                merged[(label, alpha)] = apply_vector(pre, vectors[label], alpha)

    do_ordering = len(spec.alphas) == 3

    def eval_cell(cell: tuple[str, str]) -> dict:
        target, label = cell
        vec = speaker_table[target].embedding
        per_alpha = {
            alpha: synthesize(merged[(label, alpha)], sentences, vec, config)
            for alpha in spec.alphas
        }
        own_neutral = neutral_synth[target]
        summary = secs_eval(per_alpha[secs_alpha], own_neutral, embedder)
        emotional_emb = [
            embed_utterance(embedder, s.frames) for s in per_alpha[secs_alpha]
        ]
        cross_scores = [
            secs(emotional_emb[i], neutral_emb[other][i])
            for other in sorted(speaker_table)
            if other != target
            for i in range(len(sentences))
        ]
        result = {
            "target": target,
            "emotion": label,
            "own_per_sentence": summary.per_sentence,
            "own_mean": summary.mean,
            "cross_mean": float(np.mean(cross_scores)),
        }
        if do_ordering:
            ordering = intensity_ordering_eval(per_alpha, estimator, label, own_neutral)
            result["ordering"] = ordering
        return result

    cells = [(target, label) for target in spec.targets for label in spec.emotions]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cell_results = list(pool.map(eval_cell, cells))
    else:
        cell_results = [eval_cell(cell) for cell in cells]

    emotions: dict[str, EmotionEval] = {}
    per_target: dict[str, dict[str, TargetEval]] = {t: {} for t in spec.targets}
    for label in spec.emotions:
        rows = [r for r in cell_results if r["emotion"] == label]
        own_values = np.concatenate([np.asarray(r["own_per_sentence"]) for r in rows])
        cross_mean = float(np.mean([r["cross_mean"] for r in rows]))
        if do_ordering:
            counts = np.zeros((3, 3))
            monotone_num = 0.0
            for r in rows:
                counts += np.asarray(r["ordering"].confusion) * len(sentences)
                monotone_num += r["ordering"].monotone_fraction * len(sentences)
            confusion_arr = counts / counts.sum(axis=1, keepdims=True)
            confusion = tuple(tuple(float(v) for v in row) for row in confusion_arr)
            mean_diag = float(np.trace(confusion_arr) / 3.0)
            monotone = monotone_num / (len(rows) * len(sentences))
        else:
            confusion, mean_diag, monotone = None, None, None
        emotions[label] = EmotionEval(
            secs_own_mean=float(own_values.mean()),
            secs_own_halfwidth=_normal_halfwidth(own_values),
            secs_cross_mean=cross_mean,
            secs_margin=float(own_values.mean()) - cross_mean,
            monotone_fraction=monotone,
            mean_diagonal=mean_diag,
            confusion=confusion,
            vector_stats=vector_stats(vectors[label]).to_dict(),
        )
        for r in rows:
            per_target[r["target"]][label] = TargetEval(
                secs_own_mean=r["own_mean"],
                secs_cross_mean=r["cross_mean"],
                secs_margin=r["own_mean"] - r["cross_mean"],
                monotone_fraction=(
                    r["ordering"].monotone_fraction if do_ordering else None
                ),
            )

    metadata = {
        "pre_hash": content_hash(pre),
        "embedder_hash": embedder.content_hash(),
        "corpus_seed": str(corpus.seed),
    }
    for label in spec.emotions:
        metadata[f"vector_hash_{label}"] = vector_hash(vectors[label])
    metadata.update(dict(extra_meta or {}))
    return ScenarioReport(
        case=spec.case,
        vector_source=spec.vector_source,
        source_speaker=spec.source_speaker,
        alphas=spec.alphas,
        secs_alpha=secs_alpha,
        n_sentences=spec.n_sentences,
        emotions=emotions,
        per_target=per_target,
        metadata=metadata,
    )


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def write_report(report: ScenarioReport, path) -> tuple[Path, Path]:
    """Write ``report.json`` and a matching markdown summary.

    ``path`` may be a directory (files land inside) or the JSON file path
    (markdown is written alongside with the ``.md`` suffix). Output bytes
    are a pure function of the report.
    """
    path = Path(path)
    if path.suffix == ".json":
        json_path, md_path = path, path.with_suffix(".md")
        path.parent.mkdir(parents=True, exist_ok=True)
    else:
        path.mkdir(parents=True, exist_ok=True)
        json_path, md_path = path / "report.json", path / "report.md"
    json_path.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    md_path.write_text(render_markdown(report), encoding="utf-8")
    return json_path, md_path


def read_report(path) -> ScenarioReport:
    return ScenarioReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else f"{x:.4f}"


def render_markdown(report: ScenarioReport) -> str:
    source = report.vector_source
    if report.source_speaker:
        source += f"({report.source_speaker})"
    lines = [
        f"# Scenario report: {report.case} / {source}",
        "",
        f"Alphas: {list(report.alphas)}; SECS evaluated at alpha={report.secs_alpha}; "
        f"{report.n_sentences} sentences per target.",
        "",
        "| Emotion | SECS own (mean ± 95% hw) | SECS cross (mean) | Margin | Ordering acc | Monotone frac |",
        "|---|---|---|---|---|---|",
    ]
    for label in sorted(report.emotions):
        ev = report.emotions[label]
        lines.append(
            f"| {label} | {ev.secs_own_mean:.4f} ± {ev.secs_own_halfwidth:.4f} "
            f"| {ev.secs_cross_mean:.4f} | {ev.secs_margin:.4f} "
            f"| {_fmt(ev.mean_diagonal)} | {_fmt(ev.monotone_fraction)} |"
        )
    for label in sorted(report.emotions):
        ev = report.emotions[label]
        if ev.confusion is None:
            continue
        lines += [
            "",
            f"## Intensity confusion: {label} (rows: true, cols: perceived)",
            "",
            "| true \\ perceived | weak | medium | strong |",
            "|---|---|---|---|",
        ]
        for slot, row in zip(INTENSITY_SLOTS, ev.confusion):
            cells = " | ".join(f"{v:.3f}" for v in row)
            lines.append(f"| {slot} | {cells} |")
    lines += [
        "",
        f"## Per-target SECS at alpha={report.secs_alpha}",
        "",
        "| Target | Emotion | Own | Cross | Margin |",
        "|---|---|---|---|---|",
    ]
    for target in sorted(report.per_target):
        for label in sorted(report.per_target[target]):
            tv = report.per_target[target][label]
            lines.append(
                f"| {target} | {label} | {tv.secs_own_mean:.4f} "
                f"| {tv.secs_cross_mean:.4f} | {tv.secs_margin:.4f} |"
            )
    lines += ["", "## Metadata", ""]
    for key in sorted(report.metadata):
        lines.append(f"- {key}: {report.metadata[key]}")
    return "\n".join(lines) + "\n"
