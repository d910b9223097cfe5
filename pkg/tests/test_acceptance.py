"""Acceptance suite: one test per criterion, one printed PASS/FAIL line each.

Criteria 4-6 run the bundled reproduction config end to end (twice, for the
determinism check) and assert the scaled-down analogues of the method's
claims: monotone intensity response, high automatic ordering accuracy,
speaker-consistency margins for every target including unseen speakers, and
a baseline contrast in the cross-speaker case.
"""

import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from emovec.arith import apply_vector, extract_vector
from emovec.model import ModelConfig, init_params, loss_and_grad
from emovec.params import load, save, save_bytes
from emovec.pipeline import load_experiment_config, run_experiment

from helpers import (
    assert_within_ulp,
    finite_difference_grads,
    random_compatible_pair,
    random_parameter_set,
    tensor_grad_rel_errors,
)

PAPER_CONFIG = Path(__file__).resolve().parents[1] / "demos" / "paper_repro.toml"

AGNOSTIC_SLUGS = (
    "same_spk_speaker_agnostic",
    "cross_seen_speaker_agnostic",
    "cross_unseen_speaker_agnostic",
)
BASELINE_SLUG = "cross_seen_single_speaker_es02"


@contextmanager
def criterion(number: int, name: str):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {number} ({name}): FAIL", flush=True)
        raise
    print(f"ACCEPTANCE {number} ({name}): PASS", flush=True)


@pytest.fixture(scope="session")
def paper_config():
    return load_experiment_config(PAPER_CONFIG)


@pytest.fixture(scope="session")
def run_a(paper_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("paper_run_a")
    start = time.monotonic()
    result = run_experiment(paper_config, out_dir=out)
    return result, time.monotonic() - start


@pytest.fixture(scope="session")
def run_b(paper_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("paper_run_b")
    return run_experiment(paper_config, out_dir=out)


def test_criterion_1_checkpoint_roundtrip(tmp_path):
    with criterion(1, "checkpoint round-trip, 200 random sets"):
        rng = np.random.default_rng(101)
        start = time.monotonic()
        for i in range(200):
            if i == 0:
                s = random_parameter_set(rng, meta={})  # plain
            elif i == 1:
                from emovec.params import ParameterSet

                s = ParameterSet({})  # empty set
            else:
                meta = {"role": "finetuned", "emotion": "angry", "seed": str(i)} if i % 3 else {}
                s = random_parameter_set(rng, scale=float(rng.uniform(1e-3, 1e3)), meta=meta)
            path = tmp_path / f"s{i:03d}.evc"
            save(s, path)
            loaded = load(path)
            assert loaded == s, f"set {i} not bit-exact after round-trip"
            assert save_bytes(loaded) == path.read_bytes(), f"set {i} re-save not canonical"
        elapsed = time.monotonic() - start
        assert elapsed < 10.0, f"round-trip suite took {elapsed:.1f}s"


@pytest.mark.filterwarnings("ignore::emovec.errors.EmovecWarning")
def test_criterion_2_arithmetic_identities():
    with criterion(2, "arithmetic identities, 100 random pairs"):
        rng = np.random.default_rng(202)
        start = time.monotonic()
        for i in range(100):
            pre, emo = random_compatible_pair(rng)
            tau = extract_vector(emo, pre, "angry")

            frozen = apply_vector(pre, tau, 0.0)
            for name in pre.names:
                assert (
                    frozen.array(name).tobytes() == pre.array(name).tobytes()
                ), f"pair {i}: alpha=0 not bit-identical for {name}"

            rebuilt = apply_vector(pre, tau, 1.0)
            for name in pre.names:
                assert_within_ulp(
                    rebuilt.array(name),
                    emo.array(name),
                    2,
                    scale=pre.array(name),
                    context=f"pair {i} reconstruction {name}",
                )

            a, b = rng.uniform(-1.0, 1.0, 2)
            two_step = apply_vector(apply_vector(pre, tau, a), tau, b)
            one_step = apply_vector(pre, tau, a + b)
            for name in pre.names:
                assert_within_ulp(
                    two_step.array(name),
                    one_step.array(name),
                    4,
                    scale=np.maximum(np.abs(pre.array(name)), np.abs(tau.array(name))),
                    context=f"pair {i} additivity {name}",
                )
        elapsed = time.monotonic() - start
        assert elapsed < 30.0, f"identity suite took {elapsed:.1f}s"


def test_criterion_3_gradient_oracle():
    with criterion(3, "gradient vs central finite differences"):
        from emovec.corpus import Utterance

        rng = np.random.default_rng(303)
        config = ModelConfig()
        start = time.monotonic()
        for batch_idx in range(5):
            params = init_params(config, 300 + batch_idx)
            speakers = ["a", "b"]
            vecs = {}
            for s in speakers:
                v = rng.normal(size=config.speaker_dim)
                vecs[s] = v / np.linalg.norm(v)
            batch = []
            for j in range(2):
                length = int(rng.integers(4, 10))
                tokens = tuple(int(t) for t in rng.integers(0, config.vocab, length))
                feats = rng.normal(0.0, 0.5, (length, config.feature_dim))
                batch.append(Utterance(tokens, speakers[j], "neutral", 0.0, feats))
            _, analytic = loss_and_grad(params, batch, vecs, config)
            numeric = finite_difference_grads(params, batch, vecs, config, eps=1e-3)
            errors = tensor_grad_rel_errors(analytic, numeric)
            for name, err in errors.items():
                assert err < 1e-4, f"batch {batch_idx}, tensor {name}: relative error {err:.2e}"
        elapsed = time.monotonic() - start
        assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"


def test_criterion_4_desk_scale_paper_analogue(paper_config, run_a):
    with criterion(4, "speaker-agnostic vector, three cases"):
        result, elapsed = run_a
        # the configured setup matches the stated defaults
        assert paper_config.corpus.neutral_only_speakers == 8
        assert paper_config.corpus.emotional_speakers == 4
        assert paper_config.corpus.unseen_speakers == 2
        assert paper_config.pretrain.steps == 2000
        assert paper_config.finetune.steps == 500
        assert paper_config.evaluation.alphas == (0.1, 0.5, 0.9)
        assert float(result.pre.meta["final_val_loss"]) < 0.05

        for slug in AGNOSTIC_SLUGS:
            report = result.reports[slug]
            assert report.secs_alpha == 0.9
            for label, ev in report.emotions.items():
                assert ev.monotone_fraction >= 0.9, (
                    f"{slug}/{label}: monotone fraction {ev.monotone_fraction:.3f} < 0.9"
                )
                assert ev.mean_diagonal >= 0.9, (
                    f"{slug}/{label}: ordering accuracy {ev.mean_diagonal:.3f} < 0.9"
                )
            for target, by_emotion in report.per_target.items():
                for label, tv in by_emotion.items():
                    assert tv.secs_margin >= 0.2, (
                        f"{slug}/{target}/{label}: SECS margin {tv.secs_margin:.3f} < 0.2"
                    )
        unseen_report = result.reports["cross_unseen_speaker_agnostic"]
        assert set(unseen_report.per_target) == set(result.corpus.unseen_speaker_ids)
        assert elapsed < 600.0, f"pipeline took {elapsed:.1f}s"


def test_criterion_5_baseline_contrast(run_a):
    with criterion(5, "single-speaker vs speaker-agnostic margin"):
        result, _ = run_a
        agnostic = result.reports["cross_seen_speaker_agnostic"]
        baseline = result.reports[BASELINE_SLUG]
        assert agnostic.per_target.keys() == baseline.per_target.keys()
        margin_agnostic = float(
            np.mean([ev.secs_margin for ev in agnostic.emotions.values()])
        )
        margin_single = float(
            np.mean([ev.secs_margin for ev in baseline.emotions.values()])
        )
        assert margin_single < margin_agnostic, (
            f"single-speaker margin {margin_single:.4f} not strictly below "
            f"speaker-agnostic margin {margin_agnostic:.4f}"
        )


def test_criterion_6_end_to_end_determinism(run_a, run_b):
    with criterion(6, "bit-identical checkpoints and reports"):
        tree_a, _ = run_a
        tree_b = run_b
        files_a = sorted(
            p.relative_to(tree_a.out_dir) for p in tree_a.out_dir.rglob("*") if p.is_file()
        )
        files_b = sorted(
            p.relative_to(tree_b.out_dir) for p in tree_b.out_dir.rglob("*") if p.is_file()
        )
        assert files_a == files_b, "run directories have different file sets"
        assert len(files_a) >= 20
        for rel in files_a:
            ba = (tree_a.out_dir / rel).read_bytes()
            bb = (tree_b.out_dir / rel).read_bytes()
            assert ba == bb, f"{rel} differs between runs"
