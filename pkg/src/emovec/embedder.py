"""Speaker embeddings from a stats-pooling classifier over feature frames.

The embedder pools each utterance's 11-dim frames into per-dimension mean
and standard deviation (22 dims), maps them through a 22->16 affine
bottleneck, and classifies the speaker with a 16->num_speakers softmax
head. It trains only on neutral utterances of seen speakers and is frozen
afterwards. The utterance embedding is the L2-normalized bottleneck
pre-activation; a speaker-level vector averages utterance embeddings and
re-normalizes.

Speaker similarity is measured as cosine between embeddings (SECS).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import FEATURE_DIM, Corpus, Utterance
from .errors import ValidationError
from .params import ParameterSet, content_hash

EMBED_DIM = 16
POOLED_DIM = 2 * FEATURE_DIM

_STREAM_EMBEDDER = 21


@dataclass(frozen=True)
class SpeakerEmbedding:
    """Fixed-dimension voice print; unit L2 norm when ``normalized``."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        vec = np.array(self.values, dtype=np.float64)
        if vec.shape != (EMBED_DIM,):
            raise ValidationError(f"embedding must have shape ({EMBED_DIM},), got {vec.shape}")
        if self.normalized and abs(np.linalg.norm(vec) - 1.0) > 1e-6:
            raise ValidationError("normalized embedding must have unit L2 norm")
        vec.flags.writeable = False
        object.__setattr__(self, "values", vec)


@dataclass(frozen=True)
class EmbedderModel:
    """Frozen stats-pooling speaker classifier.

    ``speakers`` is the ordered class list used by the softmax head.
    Weights are float32 (checkpoint dtype); computation upcasts to float64.
    """

    bottleneck_w: np.ndarray  # (16, 22)
    bottleneck_b: np.ndarray  # (16,)
    head_w: np.ndarray  # (num_speakers, 16)
    head_b: np.ndarray  # (num_speakers,)
    speakers: tuple[str, ...]
    meta: Mapping[str, str]

    def to_parameter_set(self) -> ParameterSet:
        meta = dict(self.meta)
        meta.update({"role": "embedder", "speakers": ",".join(self.speakers)})
        return ParameterSet.from_arrays(
            {
                "bottleneck.w": self.bottleneck_w,
                "bottleneck.b": self.bottleneck_b,
                "head.w": self.head_w,
                "head.b": self.head_b,
            },
            meta,
        )

    @classmethod
    def from_parameter_set(cls, params: ParameterSet) -> "EmbedderModel":
        if params.meta.get("role") != "embedder":
            raise ValidationError(
                f"expected meta role 'embedder', got {params.meta.get('role')!r}"
            )
        if not params.meta.get("speakers"):
            raise ValidationError("embedder checkpoint is missing the speakers list")
        meta = {k: v for k, v in params.meta.items() if k not in ("role", "speakers")}
        return cls(
            bottleneck_w=params.array("bottleneck.w"),
            bottleneck_b=params.array("bottleneck.b"),
            head_w=params.array("head.w"),
            head_b=params.array("head.b"),
            speakers=tuple(params.meta.get("speakers", "").split(",")),
            meta=meta,
        )

    def content_hash(self) -> str:
        return content_hash(self.to_parameter_set())


def pool_frames(frames: np.ndarray) -> np.ndarray:
    """Per-dimension mean and (population) standard deviation, 22 dims."""
    arr = np.asarray(frames, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != FEATURE_DIM:
        raise ValidationError(f"frames must be (T, {FEATURE_DIM}) with T >= 1, got {arr.shape}")
    return np.concatenate([arr.mean(axis=0), arr.std(axis=0)])


def embed_utterance(model: EmbedderModel, frames: np.ndarray) -> SpeakerEmbedding:
    """L2-normalized bottleneck pre-activation of the pooled frames."""
    pooled = pool_frames(frames)
    z = model.bottleneck_w.astype(np.float64) @ pooled + model.bottleneck_b.astype(np.float64)
    norm = np.linalg.norm(z)
    if norm == 0.0:
        raise ValidationError("degenerate embedding (zero bottleneck output)")
    return SpeakerEmbedding(z / norm)


def speaker_vector(model: EmbedderModel, utterance_frames: Iterable[np.ndarray]) -> SpeakerEmbedding:
    """Speaker-level vector: mean of utterance embeddings, re-normalized.

    Embeddings are summed in a canonical (byte-lexicographic) order, so the
    result is bit-identical under permutation of the input list.
    """
    embeddings = [embed_utterance(model, frames).values for frames in utterance_frames]
    if not embeddings:
        raise ValidationError("speaker_vector requires at least one utterance")
    embeddings.sort(key=lambda v: v.tobytes())
    mean = np.mean(embeddings, axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        raise ValidationError("degenerate speaker vector (utterance embeddings cancel)")
    return SpeakerEmbedding(mean / norm)


def secs(a, b) -> float:
    """Speaker encoder cosine similarity in [-1, 1]; symmetric."""
    va = np.asarray(getattr(a, "values", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("secs is undefined for a zero vector")
    if va.shape == vb.shape and va.tobytes() == vb.tobytes():
        return 1.0  # identical vectors: avoid rounding the exact case
    return float(np.dot(va, vb) / (na * nb))


@dataclass(frozen=True)
class EmbedderHyper:
    steps: int = 400
    learning_rate: float = 0.05
    momentum: float = 0.9

    def __post_init__(self):
        if self.steps < 0 or self.learning_rate <= 0 or not (0 <= self.momentum < 1):
            raise ValidationError("bad embedder hyperparameters")


def _neutral_seen(corpus: Corpus, split: str) -> list[Utterance]:
    return [
        u
        for u in corpus.splits[split]
        if u.emotion == "neutral" and corpus.profiles[u.speaker_id].seen
    ]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train_embedder(corpus: Corpus, seed: int, hyper: EmbedderHyper = EmbedderHyper()) -> EmbedderModel:
    """Cross-entropy training on pooled neutral utterances of seen speakers.

    Full-batch gradient descent with momentum; deterministic per seed.
    Held-out accuracy over the neutral val split lands in the model meta.
    """
    speakers = tuple(corpus.seen_speaker_ids)
    if len(speakers) < 2:
        raise ValidationError(f"need >= 2 seen speakers to train an embedder, got {len(speakers)}")
    class_of = {s: i for i, s in enumerate(speakers)}

    train_utts = _neutral_seen(corpus, "train")
    if not train_utts:
        raise ValidationError("no neutral training utterances for the embedder")
    x = np.stack([pool_frames(u.features) for u in train_utts])
    y = np.array([class_of[u.speaker_id] for u in train_utts])
    n, c = len(train_utts), len(speakers)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_EMBEDDER]))
    wb = rng.uniform(-1, 1, (EMBED_DIM, POOLED_DIM)) * np.sqrt(6.0 / (EMBED_DIM + POOLED_DIM))
    bb = np.zeros(EMBED_DIM)
    wc = rng.uniform(-1, 1, (c, EMBED_DIM)) * np.sqrt(6.0 / (c + EMBED_DIM))
    bc = np.zeros(c)
    vel = [np.zeros_like(m) for m in (wb, bb, wc, bc)]

    for _ in range(hyper.steps):
        z = x @ wb.T + bb
        probs = _softmax(z @ wc.T + bc)
        g_logits = (probs - onehot) / n
        g_wc = g_logits.T @ z
        g_bc = g_logits.sum(axis=0)
        g_z = g_logits @ wc
        g_wb = g_z.T @ x
        g_bb = g_z.sum(axis=0)
        for buf, (mat, grad) in zip(vel, ((wb, g_wb), (bb, g_bb), (wc, g_wc), (bc, g_bc))):
            buf *= hyper.momentum
            buf -= hyper.learning_rate * grad
            mat += buf

    model = EmbedderModel(
        bottleneck_w=wb.astype(np.float32),
        bottleneck_b=bb.astype(np.float32),
        head_w=wc.astype(np.float32),
        head_b=bc.astype(np.float32),
        speakers=speakers,
        meta={},
    )
    accuracy = classification_accuracy(model, _neutral_seen(corpus, "val"))
    meta = {
        "seed": str(int(seed)),
        "steps": str(hyper.steps),
        "holdout_accuracy": repr(accuracy),
    }
    return replace(model, meta=meta)


def classification_accuracy(model: EmbedderModel, utterances: Sequence[Utterance]) -> float:
    """Fraction of utterances whose speaker the softmax head picks."""
    if not utterances:
        return float("nan")
    class_of = {s: i for i, s in enumerate(model.speakers)}
    x = np.stack([pool_frames(u.features) for u in utterances])
    z = x @ model.bottleneck_w.T.astype(np.float64) + model.bottleneck_b.astype(np.float64)
    logits = z @ model.head_w.T.astype(np.float64) + model.head_b.astype(np.float64)
    predicted = logits.argmax(axis=1)
    truth = np.array([class_of[u.speaker_id] for u in utterances])
    return float(np.mean(predicted == truth))


# ---------------------------------------------------------------------------
# Speaker-level vector table (conditioning inputs for synthesis).
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpeakerVectorEntry:
    embedding: SpeakerEmbedding
    source_split: str  # split the reference neutral speech came from
    n_utterances: int


def speaker_vector_table(model: EmbedderModel, corpus: Corpus) -> dict[str, SpeakerVectorEntry]:
    """Per-speaker averaged neutral embeddings.

    Seen speakers average their neutral training speech; unseen speakers
    never contribute training data, so their vectors come from neutral
    test-split reference speech.
    """
    table = {}
    for speaker_id in sorted(corpus.profiles):
        profile = corpus.profiles[speaker_id]
        split = "train" if profile.seen else "test"
        utts = corpus.utterances(split, speaker_id=speaker_id, emotion="neutral")
        if not utts:
            raise ValidationError(f"no neutral {split} utterances for speaker {speaker_id!r}")
        table[speaker_id] = SpeakerVectorEntry(
            embedding=speaker_vector(model, (u.features for u in utts)),
            source_split=split,
            n_utterances=len(utts),
        )
    return table


def save_speaker_vectors(table: Mapping[str, SpeakerVectorEntry], path, extra_meta: Mapping[str, str] | None = None) -> None:
    doc = {
        "version": 1,
        "meta": dict(extra_meta or {}),
        "speakers": {
            speaker_id: {
                "values": [float(v) for v in entry.embedding.values],
                "source_split": entry.source_split,
                "n_utterances": entry.n_utterances,
            }
            for speaker_id, entry in sorted(table.items())
        },
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_speaker_vectors(path) -> dict[str, SpeakerVectorEntry]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != 1:
        raise ValidationError(f"unsupported speaker vector table version {doc.get('version')!r}")
    return {
        speaker_id: SpeakerVectorEntry(
            embedding=SpeakerEmbedding(np.asarray(rec["values"], dtype=np.float64)),
            source_split=rec["source_split"],
            n_utterances=rec["n_utterances"],
        )
        for speaker_id, rec in doc["speakers"].items()
    }
