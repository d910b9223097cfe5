"""Shared test utilities: ulp comparisons, random sets, gradient oracle."""

from __future__ import annotations

import numpy as np

from emovec.model import ModelConfig, batch_loss
from emovec.params import ParameterSet

# Relative-error floor for gradient checks: entries whose analytic and
# finite-difference values are both below this are treated as zero (finite
# differences bottom out at ~1e-10 absolute from float64 loss roundoff).
GRAD_REL_FLOOR = 1e-6


def ulp_tolerance(scale: np.ndarray, n_ulps: float) -> np.ndarray:
    """``n_ulps`` float32 ulps at the magnitude of ``scale``, elementwise."""
    s = np.maximum(np.abs(scale), np.finfo(np.float32).tiny).astype(np.float32)
    return (n_ulps * np.spacing(s)).astype(np.float64)


def assert_within_ulp(actual, expected, n_ulps: float, scale=None, context: str = ""):
    """Assert |actual - expected| <= n_ulps at the operands' scale.

    ``scale`` widens the reference magnitude (e.g. to the pre-trained
    values for the reconstruction identity, where the error bound is
    relative to the operands, not to a near-zero result).
    """
    a = np.asarray(actual, dtype=np.float64)
    e = np.asarray(expected, dtype=np.float64)
    base = np.maximum(np.abs(a), np.abs(e))
    if scale is not None:
        base = np.maximum(base, np.abs(np.asarray(scale, dtype=np.float64)))
    tol = ulp_tolerance(base, n_ulps)
    diff = np.abs(a - e)
    excess = diff / np.maximum(tol, np.finfo(np.float64).tiny)
    worst = float(excess.max()) if excess.size else 0.0
    assert (diff <= tol).all(), f"{context}: worst error {worst:.2f}x the {n_ulps}-ulp bound"


def random_arrays(rng: np.random.Generator, scale: float = 1.0) -> dict[str, np.ndarray]:
    """A small random tensor layout (1-4 tensors, mixed ranks)."""
    arrays = {}
    for i in range(rng.integers(1, 5)):
        rank = int(rng.integers(1, 4))
        shape = tuple(int(d) for d in rng.integers(1, 7, rank))
        arrays[f"t{i:02d}.{'w' if rank > 1 else 'b'}"] = (
            rng.normal(0.0, scale, shape).astype(np.float32)
        )
    return arrays


def random_parameter_set(rng: np.random.Generator, scale: float = 1.0, meta=None) -> ParameterSet:
    return ParameterSet.from_arrays(random_arrays(rng, scale), meta or {})


def random_compatible_pair(rng: np.random.Generator) -> tuple[ParameterSet, ParameterSet]:
    """(pre, emo) with emo a bounded perturbation of pre, like a fine-tune."""
    base = random_arrays(rng)
    emo = {name: (arr + rng.normal(0.0, 0.3, arr.shape)).astype(np.float32) for name, arr in base.items()}
    return ParameterSet.from_arrays(base), ParameterSet.from_arrays(emo)


def finite_difference_grads(
    params: ParameterSet,
    batch,
    speaker_vecs,
    config: ModelConfig,
    eps: float = 1e-3,
) -> dict[str, np.ndarray]:
    """Central-difference gradient oracle over the float64 batch loss.

    Perturbed parameters are rounded to float32 (the checkpoint dtype), so
    the slope divides by the exact realized step, not the nominal eps.
    """
    grads = {}
    for name, entry in params.tensors.items():
        base = entry.values.astype(np.float64)
        grad = np.zeros_like(base)
        flat = base.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            plus = flat.copy()
            minus = flat.copy()
            plus[i] += eps
            minus[i] -= eps
            plus32 = plus.astype(np.float32).astype(np.float64)
            minus32 = minus.astype(np.float32).astype(np.float64)
            step = plus32[i] - minus32[i]
            arrays_p = {n: (plus32.reshape(base.shape) if n == name else p.values) for n, p in params.tensors.items()}
            arrays_m = {n: (minus32.reshape(base.shape) if n == name else p.values) for n, p in params.tensors.items()}
            loss_p = batch_loss(ParameterSet.from_arrays(arrays_p), batch, speaker_vecs, config)
            loss_m = batch_loss(ParameterSet.from_arrays(arrays_m), batch, speaker_vecs, config)
            gflat[i] = (loss_p - loss_m) / step
        grads[name] = grad
    return grads


def max_grad_rel_error(analytic: ParameterSet, numeric: dict[str, np.ndarray]) -> float:
    """Worst entry-level relative error (floored; see GRAD_REL_FLOOR)."""
    worst = 0.0
    for name, fd in numeric.items():
        an = analytic.array(name).astype(np.float64)
        denom = np.maximum(np.maximum(np.abs(an), np.abs(fd)), GRAD_REL_FLOOR)
        worst = max(worst, float(np.max(np.abs(an - fd) / denom)))
    return worst


def tensor_grad_rel_errors(analytic: ParameterSet, numeric: dict[str, np.ndarray]) -> dict[str, float]:
    """Per-tensor relative error: ||analytic - fd|| / max(||analytic||, ||fd||)."""
    out = {}
    for name, fd in numeric.items():
        an = analytic.array(name).astype(np.float64)
        scale = max(np.linalg.norm(an), np.linalg.norm(fd), np.finfo(np.float64).tiny)
        out[name] = float(np.linalg.norm(an - fd) / scale)
    return out
