"""Deterministic synthetic multi-speaker, multi-emotion corpus generation.

Utterances are short token sequences paired with ground-truth acoustic
feature frames (one 11-dim frame per token: log-duration, log-F0,
log-energy, and an 8-dim spectral envelope proxy). Features come from a
closed-form generator: a speaker baseline, a per-token intrinsic table
drawn once from the corpus seed, an emotion offset scaled by intensity,
and Gaussian observation noise.

Two speaker populations mirror the intended data regime: speakers with
both neutral and emotional recordings, and speakers with neutral
recordings only. Two additional speakers are held out entirely (never in
any training split) for zero-shot evaluation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError

FEATURE_DIM = 11
ENVELOPE_DIM = 8
DIM_LOG_DUR = 0
DIM_LOG_F0 = 1
DIM_LOG_EN = 2
ENV_SLICE = slice(3, 11)

EMOTION_LABELS = ("neutral", "angry", "sad", "happy")

# Substream tags so profiles / token table / utterances draw independent
# deterministic streams from one corpus seed.
_STREAM_PROFILES = 1
_STREAM_TOKEN_TABLE = 2
_STREAM_UTTERANCE = 3


@dataclass(frozen=True)
class SpeakerProfile:
    """Static voice description used by the feature generator."""

    id: str
    base_log_f0: float
    rate: float
    tilt: np.ndarray  # 8-dim spectral envelope offset
    seen: bool
    has_emotion_data: bool

    def __post_init__(self):
        if not self.id:
            raise ValidationError("speaker id must be non-empty")
        if self.rate <= 0:
            raise ValidationError(f"speaker {self.id!r}: rate must be positive")
        tilt = np.asarray(self.tilt, dtype=np.float64)
        if tilt.shape != (ENVELOPE_DIM,):
            raise ValidationError(f"speaker {self.id!r}: tilt must have {ENVELOPE_DIM} dims")
        object.__setattr__(self, "tilt", tilt)


@dataclass(frozen=True)
class EmotionTransform:
    """Additive feature offsets a unit of emotion intensity contributes."""

    label: str
    delta_log_f0: float
    delta_log_energy: float
    delta_log_rate: float
    delta_tilt: np.ndarray

    def __post_init__(self):
        tilt = np.asarray(self.delta_tilt, dtype=np.float64)
        if tilt.shape != (ENVELOPE_DIM,):
            raise ValidationError(f"emotion {self.label!r}: delta_tilt must have {ENVELOPE_DIM} dims")
        object.__setattr__(self, "delta_tilt", tilt)
        if self.label == "neutral":
            if any(
                (self.delta_log_f0, self.delta_log_energy, self.delta_log_rate)
            ) or np.any(tilt != 0.0):
                raise ValidationError("neutral transform must be all-zero")


def default_transforms() -> dict[str, EmotionTransform]:
    """Separable but sign-overlapping emotion offsets (artifact parameters)."""
    zeros = np.zeros(ENVELOPE_DIM)
    high = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2])
    mid = np.array([0.0, 0.0, 0.0, 0.1, 0.1, 0.1, 0.0, 0.0])
    return {
        "neutral": EmotionTransform("neutral", 0.0, 0.0, 0.0, zeros),
        "angry": EmotionTransform("angry", 0.30, 0.40, 0.10, high),
        "sad": EmotionTransform("sad", -0.25, -0.30, -0.15, np.full(ENVELOPE_DIM, -0.2)),
        "happy": EmotionTransform("happy", 0.20, 0.20, 0.10, mid),
    }


@dataclass(frozen=True)
class TokenTable:
    """Token-intrinsic feature contributions, drawn once per corpus seed."""

    c_dur: np.ndarray
    c_f0: np.ndarray
    c_en: np.ndarray
    c_env: np.ndarray  # (vocab, 8)

    @classmethod
    def from_seed(cls, seed: int, vocab: int) -> "TokenTable":
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_TOKEN_TABLE]))
        return cls(
            c_dur=rng.normal(0.0, 0.3, vocab),
            c_f0=rng.normal(0.0, 0.3, vocab),
            c_en=rng.normal(0.0, 0.3, vocab),
            c_env=rng.normal(0.0, 0.3, (vocab, ENVELOPE_DIM)),
        )

    @property
    def vocab(self) -> int:
        return len(self.c_dur)


@dataclass(frozen=True)
class Utterance:
    tokens: tuple[int, ...]
    speaker_id: str
    emotion: str
    intensity: float
    features: np.ndarray  # (len(tokens), 11)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.shape != (len(self.tokens), FEATURE_DIM):
            raise ValidationError(
                f"features shape {feats.shape} != ({len(self.tokens)}, {FEATURE_DIM})"
            )
        if not np.isfinite(feats).all():
            raise ValidationError("utterance features must be finite")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))


def render_features(
    tokens: Sequence[int],
    speaker: SpeakerProfile,
    emotion: EmotionTransform,
    intensity: float,
    table: TokenTable,
    rng: np.random.Generator | None = None,
    noise_sigma: float = 0.1,
) -> np.ndarray:
    """Closed-form feature frames for one utterance.

    Per token: log-duration = log(1/rate) + c_dur - s*delta_log_rate,
    log-F0 = base + c_f0 + s*delta_log_f0, log-energy = c_en +
    s*delta_log_energy, envelope = tilt + c_env + s*delta_tilt. With
    ``rng=None`` the output is the noise-free closed form; otherwise
    N(0, noise_sigma^2) observation noise is added per dimension.
    """
    if not (0.0 <= intensity <= 1.0):
        raise ValidationError(f"intensity must be in [0, 1], got {intensity}")
    toks = np.asarray(tokens, dtype=np.int64)
    if toks.ndim != 1 or toks.size == 0:
        raise ValidationError("tokens must be a non-empty 1-d sequence")
    if toks.min() < 0 or toks.max() >= table.vocab:
        raise ValidationError(f"token ids must be in [0, {table.vocab - 1}]")
    s = float(intensity)
    frames = np.empty((toks.size, FEATURE_DIM), dtype=np.float64)
    frames[:, DIM_LOG_DUR] = np.log(1.0 / speaker.rate) + table.c_dur[toks] - s * emotion.delta_log_rate
    frames[:, DIM_LOG_F0] = speaker.base_log_f0 + table.c_f0[toks] + s * emotion.delta_log_f0
    frames[:, DIM_LOG_EN] = table.c_en[toks] + s * emotion.delta_log_energy
    frames[:, ENV_SLICE] = speaker.tilt + table.c_env[toks] + s * emotion.delta_tilt
    if rng is not None:
        frames += rng.normal(0.0, noise_sigma, frames.shape)
    return frames


@dataclass(frozen=True)
class CorpusConfig:
    """Speaker counts, per-speaker utterance counts, and split ratios."""

    neutral_only_speakers: int = 8
    emotional_speakers: int = 4
    unseen_speakers: int = 2
    utterances_per_speaker: int = 200
    emotions: tuple[str, ...] = ("angry", "sad", "happy")
    emotional_intensity: float = 1.0
    noise_sigma: float = 0.1
    vocab: int = 32
    min_tokens: int = 4
    max_tokens: int = 24
    train_fraction: float = 0.90
    val_fraction: float = 0.05

    def __post_init__(self):
        if min(self.neutral_only_speakers, self.emotional_speakers, self.unseen_speakers) < 0:
            raise ValidationError("speaker counts must be non-negative")
        if self.utterances_per_speaker <= 0:
            raise ValidationError("utterances_per_speaker must be positive")
        if not (0 < self.train_fraction < 1) or not (0 <= self.val_fraction < 1):
            raise ValidationError("split fractions must lie in (0, 1)")
        if self.train_fraction + self.val_fraction >= 1:
            raise ValidationError("train + val fractions must leave room for test")
        unknown = set(self.emotions) - set(EMOTION_LABELS)
        if unknown:
            raise ValidationError(f"unknown emotions {sorted(unknown)}")
        if not (self.min_tokens >= 1 and self.max_tokens >= self.min_tokens):
            raise ValidationError("need 1 <= min_tokens <= max_tokens")

    def split_sizes(self, n: int) -> tuple[int, int, int]:
        train = int(n * self.train_fraction)
        val = int(n * self.val_fraction)
        return train, val, n - train - val


@dataclass(frozen=True)
class Corpus:
    config: CorpusConfig
    seed: int
    profiles: Mapping[str, SpeakerProfile]
    transforms: Mapping[str, EmotionTransform]
    token_table: TokenTable
    splits: Mapping[str, tuple[Utterance, ...]]  # train / val / test

    @property
    def seen_speaker_ids(self) -> tuple[str, ...]:
        return tuple(s for s in sorted(self.profiles) if self.profiles[s].seen)

    @property
    def unseen_speaker_ids(self) -> tuple[str, ...]:
        return tuple(s for s in sorted(self.profiles) if not self.profiles[s].seen)

    @property
    def emotional_speaker_ids(self) -> tuple[str, ...]:
        return tuple(
            s for s in sorted(self.profiles) if self.profiles[s].has_emotion_data
        )

    @property
    def neutral_only_seen_ids(self) -> tuple[str, ...]:
        return tuple(
            s
            for s in sorted(self.profiles)
            if self.profiles[s].seen and not self.profiles[s].has_emotion_data
        )

    def utterances(
        self,
        split: str,
        speaker_id: str | None = None,
        emotion: str | None = None,
    ) -> tuple[Utterance, ...]:
        out = self.splits[split]
        if speaker_id is not None:
            out = tuple(u for u in out if u.speaker_id == speaker_id)
        if emotion is not None:
            out = tuple(u for u in out if u.emotion == emotion)
        return out

    def test_sentences(self, n: int) -> tuple[tuple[int, ...], ...]:
        """Shared evaluation sentence pool: first ``n`` distinct test-split
        token sequences from seen neutral-only speakers."""
        seen_pool = []
        used = set()
        for utt in self.splits["test"]:
            profile = self.profiles[utt.speaker_id]
            if not (profile.seen and not profile.has_emotion_data):
                continue
            if utt.tokens in used:
                continue
            used.add(utt.tokens)
            seen_pool.append(utt.tokens)
            if len(seen_pool) == n:
                return tuple(seen_pool)
        raise ValidationError(f"test split has only {len(seen_pool)} distinct sentences, need {n}")


def _speaker_stream_key(speaker_id: str) -> int:
    digest = hashlib.sha256(speaker_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def utterance_rng(seed: int, speaker_id: str, index: int) -> np.random.Generator:
    """Counter-based substream: one generator per (seed, speaker, index)."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), _STREAM_UTTERANCE, _speaker_stream_key(speaker_id), int(index)])
    )


def _make_profiles(config: CorpusConfig, seed: int) -> dict[str, SpeakerProfile]:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_PROFILES]))
    ids = (
        [(f"es{i + 1:02d}", True, True) for i in range(config.emotional_speakers)]
        + [(f"ns{i + 1:02d}", True, False) for i in range(config.neutral_only_speakers)]
        + [(f"us{i + 1:02d}", False, False) for i in range(config.unseen_speakers)]
    )
    profiles = {}
    for speaker_id, seen, emotional in ids:
        profiles[speaker_id] = SpeakerProfile(
            id=speaker_id,
            base_log_f0=float(rng.uniform(4.6, 5.6)),
            rate=float(rng.uniform(0.8, 1.25)),
            tilt=rng.normal(0.0, 0.5, ENVELOPE_DIM),
            seen=seen,
            has_emotion_data=emotional,
        )
    return profiles


def _emotion_cycle(config: CorpusConfig) -> tuple[str, ...]:
    return ("neutral",) + tuple(config.emotions)


def build_corpus(config: CorpusConfig, seed: int) -> Corpus:
    """Generate the full corpus deterministically from (config, seed).

    Seen speakers are split ~train/val/test per the configured fractions
    (200 utterances -> 180/10/10). Emotional speakers cycle through
    neutral plus the configured emotions so every split carries every
    condition. Unseen speakers contribute test data only.
    """
    profiles = _make_profiles(config, seed)
    transforms = default_transforms()
    table = TokenTable.from_seed(seed, config.vocab)
    splits: dict[str, list[Utterance]] = {"train": [], "val": [], "test": []}
    cycle = _emotion_cycle(config)

    for speaker_id in sorted(profiles):
        profile = profiles[speaker_id]
        n = config.utterances_per_speaker
        n_train, n_val, _ = config.split_sizes(n)
        for index in range(n):
            rng = utterance_rng(seed, speaker_id, index)
            length = int(rng.integers(config.min_tokens, config.max_tokens + 1))
            tokens = tuple(int(t) for t in rng.integers(0, config.vocab, length))
            if profile.has_emotion_data:
                emotion = cycle[index % len(cycle)]
            else:
                emotion = "neutral"
            intensity = config.emotional_intensity if emotion != "neutral" else 0.0
            feats = render_features(
                tokens,
                profile,
                transforms[emotion],
                intensity,
                table,
                rng=rng,
                noise_sigma=config.noise_sigma,
            )
            utt = Utterance(tokens, speaker_id, emotion, intensity, feats)
            if not profile.seen:
                splits["test"].append(utt)
            elif index < n_train:
                splits["train"].append(utt)
            elif index < n_train + n_val:
                splits["val"].append(utt)
            else:
                splits["test"].append(utt)

    return Corpus(
        config=config,
        seed=int(seed),
        profiles=profiles,
        transforms=transforms,
        token_table=table,
        splits={k: tuple(v) for k, v in splits.items()},
    )


# ---------------------------------------------------------------------------
# Serialization: profiles.json plus one JSON-lines file per split.
# ---------------------------------------------------------------------------

SPLIT_FILES = {"train": "train.jsonl", "val": "val.jsonl", "test": "test.jsonl"}
PROFILES_FILE = "profiles.json"


def _config_to_dict(config: CorpusConfig) -> dict:
    return {
        "neutral_only_speakers": config.neutral_only_speakers,
        "emotional_speakers": config.emotional_speakers,
        "unseen_speakers": config.unseen_speakers,
        "utterances_per_speaker": config.utterances_per_speaker,
        "emotions": list(config.emotions),
        "emotional_intensity": config.emotional_intensity,
        "noise_sigma": config.noise_sigma,
        "vocab": config.vocab,
        "min_tokens": config.min_tokens,
        "max_tokens": config.max_tokens,
        "train_fraction": config.train_fraction,
        "val_fraction": config.val_fraction,
    }


def save_corpus(corpus: Corpus, directory, extra_meta: Mapping[str, str] | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": 1,
        "meta": dict(extra_meta or {}),
        "seed": corpus.seed,
        "config": _config_to_dict(corpus.config),
        "emotions": {
            label: {
                "delta_log_f0": tr.delta_log_f0,
                "delta_log_energy": tr.delta_log_energy,
                "delta_log_rate": tr.delta_log_rate,
                "delta_tilt": list(tr.delta_tilt),
            }
            for label, tr in sorted(corpus.transforms.items())
        },
        "speakers": [
            {
                "id": p.id,
                "base_log_f0": p.base_log_f0,
                "rate": p.rate,
                "tilt": list(p.tilt),
                "seen": p.seen,
                "has_emotion_data": p.has_emotion_data,
            }
            for p in (corpus.profiles[s] for s in sorted(corpus.profiles))
        ],
    }
    (directory / PROFILES_FILE).write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    for split, filename in SPLIT_FILES.items():
        with open(directory / filename, "w", encoding="utf-8") as fh:
            for utt in corpus.splits[split]:
                record = {
                    "speaker": utt.speaker_id,
                    "emotion": utt.emotion,
                    "intensity": utt.intensity,
                    "tokens": list(utt.tokens),
                    "features": [list(row) for row in utt.features],
                }
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_corpus(directory) -> Corpus:
    directory = Path(directory)
    doc = json.loads((directory / PROFILES_FILE).read_text(encoding="utf-8"))
    if doc.get("version") != 1:
        raise ValidationError(f"unsupported corpus version {doc.get('version')!r}")
    config = CorpusConfig(
        neutral_only_speakers=doc["config"]["neutral_only_speakers"],
        emotional_speakers=doc["config"]["emotional_speakers"],
        unseen_speakers=doc["config"]["unseen_speakers"],
        utterances_per_speaker=doc["config"]["utterances_per_speaker"],
        emotions=tuple(doc["config"]["emotions"]),
        emotional_intensity=doc["config"]["emotional_intensity"],
        noise_sigma=doc["config"]["noise_sigma"],
        vocab=doc["config"]["vocab"],
        min_tokens=doc["config"]["min_tokens"],
        max_tokens=doc["config"]["max_tokens"],
        train_fraction=doc["config"]["train_fraction"],
        val_fraction=doc["config"]["val_fraction"],
    )
    profiles = {
        sp["id"]: SpeakerProfile(
            id=sp["id"],
            base_log_f0=sp["base_log_f0"],
            rate=sp["rate"],
            tilt=np.asarray(sp["tilt"], dtype=np.float64),
            seen=sp["seen"],
            has_emotion_data=sp["has_emotion_data"],
        )
        for sp in doc["speakers"]
    }
    transforms = {
        label: EmotionTransform(
            label=label,
            delta_log_f0=tr["delta_log_f0"],
            delta_log_energy=tr["delta_log_energy"],
            delta_log_rate=tr["delta_log_rate"],
            delta_tilt=np.asarray(tr["delta_tilt"], dtype=np.float64),
        )
        for label, tr in doc["emotions"].items()
    }
    splits = {}
    for split, filename in SPLIT_FILES.items():
        utterances = []
        with open(directory / filename, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                utterances.append(
                    Utterance(
                        tokens=tuple(rec["tokens"]),
                        speaker_id=rec["speaker"],
                        emotion=rec["emotion"],
                        intensity=rec["intensity"],
                        features=np.asarray(rec["features"], dtype=np.float64),
                    )
                )
        splits[split] = tuple(utterances)
    return Corpus(
        config=config,
        seed=int(doc["seed"]),
        profiles=profiles,
        transforms=transforms,
        token_table=TokenTable.from_seed(int(doc["seed"]), config.vocab),
        splits=splits,
    )
