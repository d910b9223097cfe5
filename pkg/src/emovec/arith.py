"""Emotion-vector extraction, scaled application, and combination.

An emotion vector is the parameter-space difference between a fine-tuned
model and the pre-trained model it started from. Scaled by ``alpha`` and
added back onto compatible parameters, it moves the model toward the
fine-tuned behavior; ``alpha`` acts as an intensity dial.

Every elementwise operation accumulates in float64 and rounds exactly once
to float32, which keeps the arithmetic identities (zero-alpha identity,
reconstruction at ``alpha=1``, additivity in ``alpha``) testable with
ulp-level bounds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import CompatibilityError, EmovecWarning, ValidationError
from .params import (
    ParameterSet,
    TensorEntry,
    check_compatible,
    content_hash,
    load,
    save,
)

# Scaling factors outside this range are legal but outside the range the
# toolkit's evaluations exercise; they trigger a warning, not an error.
ALPHA_WARN_RANGE = (0.0, 1.2)

NEAR_ZERO_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class EmotionVector:
    """Parameter-space difference with extraction provenance.

    Same named-tensor layout as :class:`ParameterSet`; ``meta`` carries the
    emotion label, scope (``single-speaker`` or ``speaker-agnostic``) and
    content hashes of both source parameter sets.
    """

    tensors: Mapping[str, TensorEntry]
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        normalized = ParameterSet(dict(self.tensors), {**dict(self.meta), "role": "vector"})
        object.__setattr__(self, "tensors", normalized.tensors)
        object.__setattr__(self, "meta", normalized.meta)

    @property
    def label(self) -> str:
        return self.meta.get("emotion", "")

    @property
    def scope(self) -> str:
        return self.meta.get("scope", "")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.tensors)

    def array(self, name: str) -> np.ndarray:
        return self.tensors[name].values

    def to_parameter_set(self) -> ParameterSet:
        return ParameterSet(dict(self.tensors), dict(self.meta))

    @classmethod
    def from_parameter_set(cls, params: ParameterSet) -> "EmotionVector":
        if params.meta.get("role") != "vector":
            raise ValidationError(
                f"expected meta role 'vector', got {params.meta.get('role')!r}"
            )
        return cls(dict(params.tensors), dict(params.meta))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmotionVector):
            return NotImplemented
        return self.to_parameter_set() == other.to_parameter_set()

    def __repr__(self):
        return f"EmotionVector({self.label!r}, scope={self.scope!r}, {len(self.tensors)} tensors)"


def save_vector(vector: EmotionVector, path) -> None:
    save(vector.to_parameter_set(), path)


def load_vector(path) -> EmotionVector:
    return EmotionVector.from_parameter_set(load(path))


def vector_hash(vector: EmotionVector) -> str:
    return content_hash(vector.to_parameter_set())


def _require_compatible(a, b, what: str) -> None:
    report = check_compatible(a, b)
    if not report.ok:
        raise CompatibilityError(f"{what}: {report.describe()}", report=report)


def _f64(entry: TensorEntry) -> np.ndarray:
    return entry.values.astype(np.float64)


def extract_vector(emo: ParameterSet, pre: ParameterSet, label: str) -> EmotionVector:
    """Emotion vector: fine-tuned parameters minus pre-trained parameters.

    Elementwise float64 subtraction rounded once to float32. Scope is
    ``speaker-agnostic`` when both sources are scoped ``multi`` (a
    multi-speaker pre-train/fine-tune pair), ``single-speaker`` otherwise.
    Warns when ``pre`` carries a role other than ``pretrained``.
    """
    if not label:
        raise ValidationError("emotion label must be non-empty")
    _require_compatible(emo, pre, "extract_vector")
    pre_role = pre.meta.get("role")
    if pre_role is not None and pre_role != "pretrained":
        warnings.warn(
            f"extract_vector: base set has role {pre_role!r}, expected 'pretrained'",
            EmovecWarning,
            stacklevel=2,
        )
    arrays = {
        name: (_f64(entry) - _f64(pre.tensors[name])).astype(np.float32)
        for name, entry in emo.tensors.items()
    }
    scope = (
        "speaker-agnostic"
        if emo.meta.get("scope") == "multi" and pre.meta.get("scope") == "multi"
        else "single-speaker"
    )
    meta = {
        "emotion": label,
        "scope": scope,
        "source_emo": content_hash(emo),
        "source_pre": content_hash(pre),
    }
    return EmotionVector({n: TensorEntry(n, a) for n, a in arrays.items()}, meta)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha):
        raise ValidationError(f"alpha must be finite, got {alpha!r}")
    if not (ALPHA_WARN_RANGE[0] <= alpha <= ALPHA_WARN_RANGE[1]):
        warnings.warn(
            f"alpha={alpha} is outside the exercised range {list(ALPHA_WARN_RANGE)}",
            EmovecWarning,
            stacklevel=3,
        )
    return alpha


def apply_vector(target: ParameterSet, tau: EmotionVector, alpha: float) -> ParameterSet:
    """Scaled addition ``target + alpha * tau``, rounded once to float32.

    ``alpha == 0`` returns tensors bit-identical to ``target``. The result
    is stamped role ``merged`` with alpha and source provenance in meta.
    """
    alpha = _check_alpha(alpha)
    _require_compatible(target, tau, "apply_vector")
    if alpha == 0.0:
        tensors = dict(target.tensors)
    else:
        a64 = np.float64(alpha)
        tensors = {
            name: TensorEntry(name, (_f64(entry) + a64 * _f64(tau.tensors[name])).astype(np.float32))
            for name, entry in target.tensors.items()
        }
    meta = dict(target.meta)
    meta.update(
        {
            "role": "merged",
            "alpha": repr(alpha),
            "emotion": tau.label or meta.get("emotion", ""),
            "vector_hash": vector_hash(tau),
            "target_hash": content_hash(target),
        }
    )
    if not meta["emotion"]:
        del meta["emotion"]
    return ParameterSet(tensors, meta)


@dataclass(frozen=True)
class ApplySpec:
    """One planned application of a vector to a target parameter set."""

    alpha: float
    vector: EmotionVector
    target: ParameterSet

    def __post_init__(self):
        _check_alpha(self.alpha)

    def run(self) -> ParameterSet:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EmovecWarning)
            return apply_vector(self.target, self.vector, self.alpha)


def combine(items: Sequence[tuple[EmotionVector, float]]) -> EmotionVector:
    """Elementwise weighted sum of compatible vectors.

    Accumulates in float64 and rounds once. The result is
    ``speaker-agnostic`` only if every input is; the label is the inputs'
    labels joined with ``+``.
    """
    if not items:
        raise ValidationError("combine requires a non-empty list of (vector, weight)")
    first = items[0][0]
    for vec, weight in items:
        if not np.isfinite(float(weight)):
            raise ValidationError(f"combine weight must be finite, got {weight!r}")
        _require_compatible(first, vec, "combine")
    acc = {name: np.zeros(entry.shape, dtype=np.float64) for name, entry in first.tensors.items()}
    for vec, weight in items:
        w64 = np.float64(weight)
        for name in acc:
            acc[name] += w64 * _f64(vec.tensors[name])
    tensors = {name: TensorEntry(name, arr.astype(np.float32)) for name, arr in acc.items()}
    scope = (
        "speaker-agnostic"
        if all(vec.scope == "speaker-agnostic" for vec, _ in items)
        else "single-speaker"
    )
    meta = {
        "emotion": "+".join(vec.label for vec, _ in items),
        "scope": scope,
        "source_vectors": ";".join(vector_hash(vec) for vec, _ in items),
        "weights": ",".join(repr(float(w)) for _, w in items),
    }
    return EmotionVector(tensors, meta)


@dataclass(frozen=True)
class TensorStats:
    l2_norm: float
    max_abs: float
    near_zero_fraction: float


@dataclass(frozen=True)
class VectorStats:
    """Per-tensor and global magnitude diagnostics for a vector."""

    per_tensor: Mapping[str, TensorStats]
    global_l2: float
    global_max_abs: float
    global_near_zero_fraction: float

    def to_dict(self) -> dict:
        return {
            "global": {
                "l2_norm": self.global_l2,
                "max_abs": self.global_max_abs,
                "near_zero_fraction": self.global_near_zero_fraction,
            },
            "per_tensor": {
                name: {
                    "l2_norm": st.l2_norm,
                    "max_abs": st.max_abs,
                    "near_zero_fraction": st.near_zero_fraction,
                }
                for name, st in self.per_tensor.items()
            },
        }


def vector_stats(tau: EmotionVector) -> VectorStats:
    """L2 norm, max magnitude, and near-zero fraction, computed in float64."""
    per_tensor = {}
    sq_sum = 0.0
    max_abs = 0.0
    near_zero = 0
    total = 0
    for name, entry in tau.tensors.items():
        v = _f64(entry)
        t_sq = float(np.sum(v * v))
        t_max = float(np.max(np.abs(v)))
        t_near = int(np.count_nonzero(np.abs(v) < NEAR_ZERO_EPS))
        per_tensor[name] = TensorStats(
            l2_norm=float(np.sqrt(t_sq)),
            max_abs=t_max,
            near_zero_fraction=t_near / v.size,
        )
        sq_sum += t_sq
        max_abs = max(max_abs, t_max)
        near_zero += t_near
        total += v.size
    if total == 0:
        return VectorStats({}, 0.0, 0.0, 1.0)
    return VectorStats(
        per_tensor=per_tensor,
        global_l2=float(np.sqrt(sq_sum)),
        global_max_abs=max_abs,
        global_near_zero_fraction=near_zero / total,
    )
