"""Tiny differentiable token-to-feature acoustic model with speaker conditioning.

Per token the model computes, with ``pos_t = t / len``:

    x  = [emb[token_t]; pos_t]
    h  = tanh(W1 x + b1)
    h' = h + P s                  (s: 16-dim speaker embedding)
    y  = W3 tanh(W2 h' + b2) + b3  in R^11

Tokens interact with nothing but their own position, so whole batches
flatten to one row-per-token matrix pass. Forward, loss, and gradients are
computed in float64; parameters live in float32 :class:`ParameterSet`
checkpoints so the parameter name/shape set stays fixed across pre-training
and fine-tuning, which is what makes parameter-difference arithmetic
well-defined.

Training is plain SGD with momentum: no optimizer state survives in the
checkpoint, so fine-tuned and pre-trained sets stay arithmetic-compatible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .corpus import FEATURE_DIM, Utterance
from .errors import TrainingDivergedError, ValidationError
from .params import ParameterSet, content_hash

_STREAM_INIT = 11
_STREAM_BATCHES = 12


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = 32
    embed_dim: int = 16
    hidden: int = 64
    speaker_dim: int = 16
    feature_dim: int = FEATURE_DIM

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """Fixed layer names; a pure function of the config."""
        e, h, s, d = self.embed_dim, self.hidden, self.speaker_dim, self.feature_dim
        return {
            "emb": (self.vocab, e),
            "enc.w1": (h, e + 1),
            "enc.b1": (h,),
            "spk.proj": (h, s),
            "dec.w2": (h, h),
            "dec.b2": (h,),
            "dec.w3": (d, h),
            "dec.b3": (d,),
        }


DEFAULT_CONFIG = ModelConfig()


def init_params(config: ModelConfig, seed: int) -> ParameterSet:
    """Glorot-uniform matrices (a = sqrt(6 / (rows + cols))), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_INIT]))
    arrays = {}
    for name, shape in sorted(config.param_shapes().items()):
        if len(shape) == 1:
            arrays[name] = np.zeros(shape, dtype=np.float32)
        else:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-bound, bound, shape).astype(np.float32)
    return ParameterSet.from_arrays(arrays, {"role": "pretrained", "init_seed": str(int(seed))})


def config_from_params(params: ParameterSet) -> ModelConfig:
    """Recover the ModelConfig a checkpoint was built with from its shapes."""
    shapes = params.shapes()
    try:
        vocab, embed_dim = shapes["emb"]
        hidden = shapes["enc.w1"][0]
        speaker_dim = shapes["spk.proj"][1]
        feature_dim = shapes["dec.w3"][0]
    except (KeyError, IndexError) as exc:
        raise ValidationError(f"checkpoint lacks the acoustic-model layout: {exc}") from exc
    config = ModelConfig(
        vocab=vocab,
        embed_dim=embed_dim,
        hidden=hidden,
        speaker_dim=speaker_dim,
        feature_dim=feature_dim,
    )
    validate_layout(params, config)
    return config


def validate_layout(params: ParameterSet, config: ModelConfig) -> None:
    expected = config.param_shapes()
    got = params.shapes()
    if got != expected:
        missing = sorted(set(expected) - set(got))
        extra = sorted(set(got) - set(expected))
        wrong = sorted(
            n for n in set(expected) & set(got) if expected[n] != got[n]
        )
        raise ValidationError(
            f"parameter layout mismatch: missing={missing} extra={extra} reshaped={wrong}"
        )


def _params64(params: ParameterSet, config: ModelConfig) -> dict[str, np.ndarray]:
    validate_layout(params, config)
    return {name: entry.values.astype(np.float64) for name, entry in params.tensors.items()}


@dataclass
class ForwardTrace:
    """Row-flattened activations kept for backprop."""

    tok: np.ndarray  # (N,) token ids
    x: np.ndarray  # (N, E+1) embedding + position
    h: np.ndarray  # (N, H) post-tanh encoder
    h_cond: np.ndarray  # (N, H) after speaker conditioning
    z: np.ndarray  # (N, H) post-tanh decoder hidden
    y: np.ndarray  # (N, D) predicted frames
    spk: np.ndarray  # (N, S) speaker rows


def _forward_rows(
    p: dict[str, np.ndarray], tok: np.ndarray, pos: np.ndarray, spk: np.ndarray
) -> ForwardTrace:
    x = np.concatenate([p["emb"][tok], pos[:, None]], axis=1)
    h = np.tanh(x @ p["enc.w1"].T + p["enc.b1"])
    h_cond = h + spk @ p["spk.proj"].T
    z = np.tanh(h_cond @ p["dec.w2"].T + p["dec.b2"])
    y = z @ p["dec.w3"].T + p["dec.b3"]
    return ForwardTrace(tok=tok, x=x, h=h, h_cond=h_cond, z=z, y=y, spk=spk)


def _speaker_row(speaker_vec, config: ModelConfig) -> np.ndarray:
    vec = np.asarray(getattr(speaker_vec, "values", speaker_vec), dtype=np.float64)
    if vec.shape != (config.speaker_dim,):
        raise ValidationError(
            f"speaker vector must have shape ({config.speaker_dim},), got {vec.shape}"
        )
    return vec


def forward(
    params: ParameterSet,
    tokens: Sequence[int],
    speaker_vec,
    config: ModelConfig = DEFAULT_CONFIG,
) -> np.ndarray:
    """Feature frames (len(tokens), feature_dim) for one utterance."""
    p = _params64(params, config)
    tok = np.asarray(tokens, dtype=np.int64)
    if tok.ndim != 1 or tok.size == 0:
        raise ValidationError("tokens must be a non-empty 1-d sequence")
    if tok.min() < 0 or tok.max() >= config.vocab:
        raise ValidationError(f"token ids must be in [0, {config.vocab - 1}]")
    vec = _speaker_row(speaker_vec, config)
    pos = np.arange(tok.size, dtype=np.float64) / tok.size
    # contiguous, matching the training batch layout bit-for-bit
    spk = np.ascontiguousarray(np.broadcast_to(vec, (tok.size, config.speaker_dim)))
    return _forward_rows(p, tok, pos, spk).y


def _flatten_batch(
    batch: Sequence[Utterance],
    speaker_vecs: Mapping[str, object],
    config: ModelConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    toks, poss, spks, targets = [], [], [], []
    for utt in batch:
        if utt.speaker_id not in speaker_vecs:
            raise ValidationError(f"no speaker vector for {utt.speaker_id!r}")
        tok = np.asarray(utt.tokens, dtype=np.int64)
        if tok.min() < 0 or tok.max() >= config.vocab:
            raise ValidationError(f"token ids must be in [0, {config.vocab - 1}]")
        vec = _speaker_row(speaker_vecs[utt.speaker_id], config)
        toks.append(tok)
        poss.append(np.arange(tok.size, dtype=np.float64) / tok.size)
        spks.append(np.broadcast_to(vec, (tok.size, config.speaker_dim)))
        targets.append(utt.features)
    return (
        np.concatenate(toks),
        np.concatenate(poss),
        np.concatenate(spks, axis=0),
        np.concatenate(targets, axis=0),
    )


def _loss_and_grad_rows(
    p: dict[str, np.ndarray],
    tok: np.ndarray,
    pos: np.ndarray,
    spk: np.ndarray,
    target: np.ndarray,
) -> tuple[float, dict[str, np.ndarray]]:
    trace = _forward_rows(p, tok, pos, spk)
    resid = trace.y - target
    n_terms = resid.size
    loss = float(np.sum(resid * resid) / n_terms)
    if not np.isfinite(loss):
        bad = _first_nonfinite_stage(trace)
        raise ValidationError(f"loss is non-finite (first non-finite stage: {bad})")

    g_y = (2.0 / n_terms) * resid
    grads: dict[str, np.ndarray] = {}
    grads["dec.w3"] = g_y.T @ trace.z
    grads["dec.b3"] = g_y.sum(axis=0)
    g_z = g_y @ p["dec.w3"]
    g_a2 = g_z * (1.0 - trace.z * trace.z)
    grads["dec.w2"] = g_a2.T @ trace.h_cond
    grads["dec.b2"] = g_a2.sum(axis=0)
    g_hc = g_a2 @ p["dec.w2"]
    grads["spk.proj"] = g_hc.T @ trace.spk
    g_a1 = g_hc * (1.0 - trace.h * trace.h)
    grads["enc.w1"] = g_a1.T @ trace.x
    grads["enc.b1"] = g_a1.sum(axis=0)
    g_x = g_a1 @ p["enc.w1"]
    g_emb = np.zeros_like(p["emb"])
    np.add.at(g_emb, tok, g_x[:, :-1])
    grads["emb"] = g_emb
    return loss, grads


def _first_nonfinite_stage(trace: ForwardTrace) -> str:
    for name, arr in (
        ("emb (enc input)", trace.x),
        ("enc.w1 (encoder)", trace.h),
        ("spk.proj (conditioning)", trace.h_cond),
        ("dec.w2 (decoder hidden)", trace.z),
        ("dec.w3 (output)", trace.y),
    ):
        if not np.isfinite(arr).all():
            return name
    return "targets"


def loss_and_grad(
    params: ParameterSet,
    batch: Sequence[Utterance],
    speaker_vecs: Mapping[str, object],
    config: ModelConfig = DEFAULT_CONFIG,
) -> tuple[float, ParameterSet]:
    """MSE over all tokens and feature dims, plus its gradient.

    The gradient comes back with exactly the model's parameter name/shape
    set (float32, single rounding from the float64 accumulation).
    """
    if not batch:
        raise ValidationError("batch must be non-empty")
    p = _params64(params, config)
    tok, pos, spk, target = _flatten_batch(batch, speaker_vecs, config)
    loss, grads = _loss_and_grad_rows(p, tok, pos, spk, target)
    grad_set = ParameterSet.from_arrays(
        {name: g.astype(np.float32) for name, g in grads.items()}, {"kind": "gradient"}
    )
    return loss, grad_set


def batch_loss(
    params: ParameterSet,
    batch: Sequence[Utterance],
    speaker_vecs: Mapping[str, object],
    config: ModelConfig = DEFAULT_CONFIG,
) -> float:
    """MSE of a batch without gradients (evaluation helper)."""
    if not batch:
        raise ValidationError("batch must be non-empty")
    p = _params64(params, config)
    tok, pos, spk, target = _flatten_batch(batch, speaker_vecs, config)
    trace = _forward_rows(p, tok, pos, spk)
    resid = trace.y - target
    return float(np.sum(resid * resid) / resid.size)


@dataclass(frozen=True)
class TrainHyper:
    """SGD-with-momentum settings for one training phase."""

    steps: int
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    divergence_threshold: float = 1e6

    def __post_init__(self):
        if self.steps < 0 or self.batch_size <= 0:
            raise ValidationError("steps must be >= 0 and batch_size positive")
        if self.learning_rate <= 0 or not (0 <= self.momentum < 1):
            raise ValidationError("need learning_rate > 0 and momentum in [0, 1)")


def train(
    init: ParameterSet,
    train_split: Sequence[Utterance],
    speaker_vecs: Mapping[str, object],
    hyper: TrainHyper,
    role: str,
    val_split: Sequence[Utterance] = (),
    config: ModelConfig = DEFAULT_CONFIG,
    meta_extra: Mapping[str, str] | None = None,
) -> ParameterSet:
    """Deterministic SGD training from ``init``; returns updated parameters.

    With ``steps == 0`` the tensors come back bit-identical to ``init``.
    Meta records the role, step count, final train/val loss over the full
    splits, the seed, and the init hash. Aborts with a diagnostic when the
    minibatch loss crosses the divergence threshold.
    """
    if role not in ("pretrained", "finetuned"):
        raise ValidationError(f"role must be 'pretrained' or 'finetuned', got {role!r}")
    if not train_split:
        raise ValidationError("training split is empty")
    p = _params64(init, config)
    velocity = {name: np.zeros_like(arr) for name, arr in p.items()}
    rng = np.random.default_rng(np.random.SeedSequence([int(hyper.seed), _STREAM_BATCHES]))

    # Flattened per-utterance rows, gathered per batch in sampled order.
    prepped = []
    for utt in train_split:
        tok = np.asarray(utt.tokens, dtype=np.int64)
        vec = _speaker_row(speaker_vecs[utt.speaker_id], config) if utt.speaker_id in speaker_vecs else None
        if vec is None:
            raise ValidationError(f"no speaker vector for {utt.speaker_id!r}")
        pos = np.arange(tok.size, dtype=np.float64) / tok.size
        spk = np.broadcast_to(vec, (tok.size, config.speaker_dim))
        prepped.append((tok, pos, spk, utt.features))

    for step in range(hyper.steps):
        idx = rng.integers(0, len(prepped), hyper.batch_size)
        tok = np.concatenate([prepped[i][0] for i in idx])
        pos = np.concatenate([prepped[i][1] for i in idx])
        spk = np.concatenate([prepped[i][2] for i in idx], axis=0)
        target = np.concatenate([prepped[i][3] for i in idx], axis=0)
        loss, grads = _loss_and_grad_rows(p, tok, pos, spk, target)
        if loss > hyper.divergence_threshold:
            raise TrainingDivergedError(
                f"loss {loss:.6g} exceeded {hyper.divergence_threshold:.6g} at step {step}"
            )
        for name in p:
            velocity[name] = hyper.momentum * velocity[name] - hyper.learning_rate * grads[name]
            p[name] = p[name] + velocity[name]

    out = ParameterSet.from_arrays({name: arr.astype(np.float32) for name, arr in p.items()})
    final_train = batch_loss(out, train_split, speaker_vecs, config)
    final_val = batch_loss(out, val_split, speaker_vecs, config) if val_split else float("nan")
    meta = {
        "role": role,
        "steps": str(hyper.steps),
        "seed": str(hyper.seed),
        "final_train_loss": repr(final_train),
        "final_val_loss": repr(final_val),
        "init_hash": content_hash(init),
    }
    meta.update(dict(meta_extra or {}))
    return ParameterSet(dict(out.tensors), meta)
