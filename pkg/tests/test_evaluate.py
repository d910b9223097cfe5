"""Evaluation harness: ordering, SECS summaries, scenario reports."""

import json

import numpy as np
import pytest

from emovec.arith import extract_vector
from emovec.errors import ValidationError
from emovec.evaluate import (
    IntensityEstimator,
    ScenarioReport,
    ScenarioSpec,
    SynthUtterance,
    intensity_ordering_eval,
    read_report,
    render_markdown,
    run_scenario,
    secs_eval,
    synthesize,
    write_report,
)
from emovec.embedder import EmbedderHyper, SpeakerVectorEntry, speaker_vector_table, train_embedder
from emovec.model import TrainHyper, train
from emovec.pipeline import emotional_split


@pytest.fixture(scope="module")
def unit_direction():
    g = np.zeros(11)
    g[1] = 1.0
    return IntensityEstimator({"angry": g})


def _batch(scores, tokens=((1, 2),)):
    """One-sentence batches whose projected score equals `scores[i]`."""
    out = []
    for s in scores:
        frames = np.zeros((len(tokens[0]), 11))
        frames[:, 1] = s
        out.append(SynthUtterance(tokens[0], frames))
    return out


def test_estimator_directions_are_unit(default_corpus):
    estimator = IntensityEstimator.from_corpus(default_corpus)
    assert set(estimator.directions) == {"angry", "sad", "happy"}
    for g in estimator.directions.values():
        assert np.linalg.norm(g) == pytest.approx(1.0, abs=1e-12)


def test_estimator_matches_transform_direction(default_corpus):
    estimator = IntensityEstimator.from_corpus(default_corpus)
    tr = default_corpus.transforms["angry"]
    raw = np.concatenate(
        [[-tr.delta_log_rate, tr.delta_log_f0, tr.delta_log_energy], tr.delta_tilt]
    )
    assert np.allclose(estimator.directions["angry"], raw / np.linalg.norm(raw), atol=1e-12)


def test_estimator_score_is_mean_projection(unit_direction):
    neutral = SynthUtterance((3, 4), np.zeros((2, 11)))
    frames = np.zeros((2, 11))
    frames[0, 1] = 1.0
    frames[1, 1] = 3.0
    assert unit_direction.score(frames, neutral.frames, "angry") == pytest.approx(2.0)


def test_ordering_identity_when_strictly_increasing(unit_direction):
    neutral = _batch([0.0])
    per_alpha = {0.1: _batch([1.0]), 0.5: _batch([2.0]), 0.9: _batch([3.0])}
    result = intensity_ordering_eval(per_alpha, unit_direction, "angry", neutral)
    assert result.confusion == ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
    assert result.mean_diagonal == 1.0
    assert result.monotone_fraction == 1.0


def test_ordering_conservative_ties(unit_direction):
    neutral = _batch([0.0])
    per_alpha = {0.1: _batch([0.0]), 0.5: _batch([0.0]), 0.9: _batch([0.0])}
    result = intensity_ordering_eval(per_alpha, unit_direction, "angry", neutral)
    assert result.mean_diagonal <= 1.0 / 3.0
    assert result.monotone_fraction == 0.0
    for row in result.confusion:
        assert sum(row) == pytest.approx(1.0, abs=1e-12)


def test_ordering_partial_swap(unit_direction):
    neutral = _batch([0.0])
    per_alpha = {0.1: _batch([2.0]), 0.5: _batch([1.0]), 0.9: _batch([3.0])}
    result = intensity_ordering_eval(per_alpha, unit_direction, "angry", neutral)
    assert result.mean_diagonal == pytest.approx(1.0 / 3.0)
    assert result.confusion[2][2] == 1.0  # strong still strongest


def test_ordering_validation(unit_direction):
    neutral = _batch([0.0])
    with pytest.raises(ValidationError):
        intensity_ordering_eval({0.1: _batch([1.0]), 0.5: _batch([2.0])}, unit_direction, "angry", neutral)
    with pytest.raises(ValidationError):
        intensity_ordering_eval(
            {0.1: _batch([1.0]), 0.5: _batch([2.0]), 0.9: []}, unit_direction, "angry", neutral
        )
    mismatched = [SynthUtterance((9, 9), np.zeros((2, 11)))]
    with pytest.raises(ValidationError):
        intensity_ordering_eval(
            {0.1: _batch([1.0]), 0.5: _batch([2.0]), 0.9: mismatched}, unit_direction, "angry", neutral
        )


def test_secs_eval_identical_outputs(default_embedder, rng):
    batch = [SynthUtterance((1, 2, 3), rng.normal(0, 1, (3, 11))) for _ in range(5)]
    summary = secs_eval(batch, batch, default_embedder)
    assert summary.mean == 1.0
    assert summary.halfwidth == 0.0
    assert summary.per_sentence == (1.0,) * 5


def test_secs_eval_sentence_mismatch(default_embedder, rng):
    a = [SynthUtterance((1, 2), rng.normal(0, 1, (2, 11)))]
    b = [SynthUtterance((2, 1), rng.normal(0, 1, (2, 11)))]
    with pytest.raises(ValidationError):
        secs_eval(a, b, default_embedder)
    with pytest.raises(ValidationError):
        secs_eval(a, a + a, default_embedder)


def test_secs_eval_cross_speaker_below_within(default_corpus, default_embedder, default_table, small_model):
    sentences = default_corpus.test_sentences(8)
    speakers = default_corpus.neutral_only_seen_ids[:2]
    # ground-truth-style frames from the generator, rendered per speaker
    from emovec.corpus import render_features

    def gt_batch(speaker_id, seed):
        rng = np.random.default_rng(seed)
        return [
            SynthUtterance(
                s,
                render_features(
                    s,
                    default_corpus.profiles[speaker_id],
                    default_corpus.transforms["neutral"],
                    0.0,
                    default_corpus.token_table,
                    rng=rng,
                ),
            )
            for s in sentences
        ]

    same = secs_eval(gt_batch(speakers[0], 1), gt_batch(speakers[0], 2), default_embedder)
    cross = secs_eval(gt_batch(speakers[0], 1), gt_batch(speakers[1], 3), default_embedder)
    assert same.mean - cross.mean >= 0.2


# ---------------------------------------------------------------------------
# Scenario-level tests on the small corpus
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_scenario_setup(small_corpus):
    embedder = train_embedder(small_corpus, 5, EmbedderHyper(steps=200))
    table = speaker_vector_table(embedder, small_corpus)
    vecs = {s: e.embedding for s, e in table.items()}
    from emovec.model import ModelConfig, init_params
    from emovec.pipeline import neutral_seen_split

    pre = train(
        init_params(ModelConfig(), 3),
        neutral_seen_split(small_corpus, "train"),
        vecs,
        TrainHyper(steps=120, seed=4),
        role="pretrained",
        meta_extra={"scope": "multi"},
    )
    vectors = {}
    for emotion in small_corpus.config.emotions:
        ft = train(
            pre,
            emotional_split(small_corpus, "train", emotion),
            vecs,
            TrainHyper(steps=60, learning_rate=0.002, seed=6),
            role="finetuned",
            meta_extra={"scope": "multi", "emotion": emotion},
        )
        vectors[emotion] = extract_vector(ft, pre, emotion)
    return small_corpus, embedder, table, pre, vectors


def test_run_scenario_report_structure(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    spec = ScenarioSpec(
        case="same_spk",
        targets=corpus.emotional_speaker_ids,
        emotions=corpus.config.emotions,
        n_sentences=4,
    )
    report = run_scenario(spec, pre, vectors, embedder, corpus, table)
    assert set(report.emotions) == set(corpus.config.emotions)
    assert set(report.per_target) == set(corpus.emotional_speaker_ids)
    for ev in report.emotions.values():
        assert ev.confusion is not None
        for row in ev.confusion:
            assert sum(row) == pytest.approx(1.0, abs=1e-9)
        assert 0.0 <= ev.monotone_fraction <= 1.0
        assert -2.0 <= ev.secs_margin <= 2.0
        assert ev.vector_stats["global"]["l2_norm"] > 0
    assert report.metadata["pre_hash"]
    assert report.secs_alpha == 0.9


def test_run_scenario_zero_alpha_secs_is_exactly_one(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    spec = ScenarioSpec(
        case="same_spk",
        targets=corpus.emotional_speaker_ids[:1],
        emotions=("angry",),
        alphas=(0.0,),
        n_sentences=3,
    )
    report = run_scenario(spec, pre, vectors, embedder, corpus, table)
    ev = report.emotions["angry"]
    assert ev.secs_own_mean == 1.0
    assert ev.secs_own_halfwidth == 0.0
    assert ev.confusion is None and ev.mean_diagonal is None


def test_run_scenario_workers_match_sequential(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    spec = ScenarioSpec(
        case="cross_seen",
        targets=corpus.neutral_only_seen_ids[:2],
        emotions=corpus.config.emotions,
        n_sentences=3,
    )
    sequential = run_scenario(spec, pre, vectors, embedder, corpus, table, workers=1)
    threaded = run_scenario(spec, pre, vectors, embedder, corpus, table, workers=4)
    assert sequential.to_dict() == threaded.to_dict()


def test_scenario_spec_validation(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    with pytest.raises(ValidationError):
        ScenarioSpec(case="nope", targets=("es01",))
    with pytest.raises(ValidationError):
        ScenarioSpec(case="same_spk", targets=())
    with pytest.raises(ValidationError):
        ScenarioSpec(case="same_spk", targets=("es01",), alphas=(0.1, 0.1, 0.9))
    with pytest.raises(ValidationError):
        ScenarioSpec(case="same_spk", targets=("es01",), vector_source="single_speaker")

    neutral_only = corpus.neutral_only_seen_ids[0]
    spec = ScenarioSpec(case="same_spk", targets=(neutral_only,))
    with pytest.raises(ValidationError):
        run_scenario(spec, pre, vectors, embedder, corpus, table)

    emotional = corpus.emotional_speaker_ids[0]
    spec = ScenarioSpec(case="cross_seen", targets=(emotional,))
    with pytest.raises(ValidationError):
        run_scenario(spec, pre, vectors, embedder, corpus, table)

    seen = corpus.neutral_only_seen_ids[0]
    spec = ScenarioSpec(case="cross_unseen", targets=(seen,))
    with pytest.raises(ValidationError):
        run_scenario(spec, pre, vectors, embedder, corpus, table)


def test_unseen_target_with_training_vector_is_contract_breach(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    unseen = corpus.unseen_speaker_ids[0]
    tampered = dict(table)
    tampered[unseen] = SpeakerVectorEntry(
        embedding=table[unseen].embedding, source_split="train", n_utterances=3
    )
    spec = ScenarioSpec(case="cross_unseen", targets=(unseen,), n_sentences=3)
    with pytest.raises(ValidationError) as err:
        run_scenario(spec, pre, vectors, embedder, corpus, tampered)
    assert "contract breach" in str(err.value)


def test_report_json_roundtrip_and_write_determinism(tmp_path, small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    spec = ScenarioSpec(
        case="cross_unseen",
        targets=corpus.unseen_speaker_ids,
        emotions=("angry",),
        n_sentences=3,
    )
    report = run_scenario(spec, pre, vectors, embedder, corpus, table)

    rebuilt = ScenarioReport.from_dict(json.loads(json.dumps(report.to_dict())))
    assert rebuilt == report

    json_path, md_path = write_report(report, tmp_path / "one")
    assert read_report(json_path) == report
    write_report(report, tmp_path / "two")
    assert (tmp_path / "one" / "report.json").read_bytes() == (tmp_path / "two" / "report.json").read_bytes()
    assert (tmp_path / "one" / "report.md").read_bytes() == (tmp_path / "two" / "report.md").read_bytes()

    explicit_json = tmp_path / "direct.json"
    write_report(report, explicit_json)
    assert explicit_json.exists() and (tmp_path / "direct.md").exists()


def test_markdown_has_one_row_per_emotion(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    spec = ScenarioSpec(
        case="same_spk", targets=corpus.emotional_speaker_ids[:1], n_sentences=3
    )
    report = run_scenario(spec, pre, vectors, embedder, corpus, table)
    md = render_markdown(report)
    for emotion in corpus.config.emotions:
        rows = [line for line in md.splitlines() if line.startswith(f"| {emotion} |")]
        assert len(rows) == 1
        assert "±" in rows[0]
    assert "true \\ perceived" in md


def test_synthesize_matches_forward(small_scenario_setup):
    corpus, embedder, table, pre, vectors = small_scenario_setup
    from emovec.model import forward

    sentences = corpus.test_sentences(2)
    batch = synthesize(pre, sentences, table[corpus.seen_speaker_ids[0]].embedding)
    assert [s.tokens for s in batch] == [tuple(s) for s in sentences]
    direct = forward(pre, sentences[0], table[corpus.seen_speaker_ids[0]].embedding)
    assert np.array_equal(batch[0].frames, direct)
