"""Checkpoint container and emotion-vector arithmetic on toy tensors.

Walks through the core primitives: saving/loading bit-exact checkpoints,
compatibility checking, extracting a parameter difference, scaling it back
onto a model, and combining vectors.
"""

import tempfile
from pathlib import Path

import numpy as np

from emovec import (
    ParameterSet,
    apply_vector,
    check_compatible,
    combine,
    content_hash,
    extract_vector,
    load,
    save,
    vector_stats,
)

work = Path(tempfile.mkdtemp(prefix="emovec_demo_"))

# A miniature "model": two tensors plus metadata.
pre = ParameterSet.from_arrays(
    {
        "dec.w": np.array([[0.5, -0.25], [1.0, 0.0]], dtype=np.float32),
        "dec.b": np.array([0.1, -0.1], dtype=np.float32),
    },
    {"role": "pretrained", "scope": "multi"},
)
print("pre-trained set:", pre)
print("content hash:", content_hash(pre)[:16], "...")

save(pre, work / "pre.evc")
reloaded = load(work / "pre.evc")
print("round-trip bit-exact:", reloaded == pre)

# A "fine-tuned" version: same layout, shifted values.
emo = ParameterSet.from_arrays(
    {
        "dec.w": pre.array("dec.w") + np.float32(0.2),
        "dec.b": pre.array("dec.b") - np.float32(0.05),
    },
    {"role": "finetuned", "scope": "multi", "emotion": "angry"},
)
print("\ncompatibility:", check_compatible(pre, emo).describe())

tau = extract_vector(emo, pre, "angry")
print("emotion vector scope:", tau.scope)
print("dec.w delta:\n", tau.array("dec.w"))

stats = vector_stats(tau)
print(f"vector L2 = {stats.global_l2:.4f}, max |v| = {stats.global_max_abs:.4f}")

# Scaling the vector dials the shift; alpha=0 is a bit-exact no-op.
for alpha in (0.0, 0.5, 0.9, 1.0):
    merged = apply_vector(pre, tau, alpha)
    print(f"alpha={alpha:.1f} -> dec.b = {merged.array('dec.b')}")

identity = apply_vector(pre, tau, 0.0)
print("alpha=0 bit-identical:", identity.array("dec.w").tobytes() == pre.array("dec.w").tobytes())

# Vectors combine linearly (the hook for mixing emotions).
sad = extract_vector(
    ParameterSet.from_arrays(
        {"dec.w": pre.array("dec.w") - np.float32(0.1), "dec.b": pre.array("dec.b")},
        {"scope": "multi"},
    ),
    pre,
    "sad",
)
blend = combine([(tau, 0.5), (sad, 0.5)])
print("\ncombined label:", blend.label, "| scope:", blend.scope)
print("blend dec.w:\n", blend.array("dec.w"))
