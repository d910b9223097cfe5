"""Experiment config parsing and the end-to-end pipeline on a small config."""

import json

import pytest

from emovec.errors import ValidationError
from emovec.evaluate import read_report
from emovec.params import load
from emovec.pipeline import (
    default_targets,
    load_experiment_config,
    resolve_scenario,
    run_experiment,
)

SMALL_CONFIG = """
[output]
dir = "{out}"

[corpus]
seed = 99
neutral_only_speakers = 3
emotional_speakers = 2
unseen_speakers = 1
utterances_per_speaker = 40

[init]
seed = 3

[embedder]
seed = 5
steps = 200

[train.pretrain]
steps = 120
seed = 4

[train.finetune]
steps = 60
learning_rate = 0.002
seed = 6

[evaluation]
n_sentences = 4

[[scenario]]
case = "same_spk"

[[scenario]]
case = "cross_unseen"

[[scenario]]
case = "cross_seen"
vector_source = "single_speaker"
source_speaker = "es01"
"""


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipeline")
    path = root / "exp.toml"
    path.write_text(SMALL_CONFIG.format(out=root / "run"), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def experiment(small_config):
    config = load_experiment_config(small_config)
    return run_experiment(config)


def test_config_parses(small_config):
    config = load_experiment_config(small_config)
    assert config.corpus_seed == 99
    assert config.pretrain.steps == 120
    assert config.finetune.learning_rate == 0.002
    assert config.evaluation.alphas == (0.1, 0.5, 0.9)
    assert len(config.scenarios) == 3
    assert config.config_hash() == load_experiment_config(small_config).config_hash()


def test_config_missing_seed_is_named(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(
        SMALL_CONFIG.format(out=tmp_path).replace("seed = 4\n", "\n"), encoding="utf-8"
    )
    with pytest.raises(ValidationError) as err:
        load_experiment_config(path)
    assert "seed" in str(err.value) and "train.pretrain" in str(err.value)


def test_config_requires_scenarios(tmp_path):
    path = tmp_path / "bad.toml"
    text = SMALL_CONFIG.format(out=tmp_path)
    path.write_text(text[: text.index("[[scenario]]")], encoding="utf-8")
    with pytest.raises(ValidationError) as err:
        load_experiment_config(path)
    assert "scenario" in str(err.value)


def test_config_vocab_mismatch(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text(
        SMALL_CONFIG.format(out=tmp_path) + "\n[model]\nvocab = 64\n", encoding="utf-8"
    )
    with pytest.raises(ValidationError) as err:
        load_experiment_config(path)
    assert "vocab" in str(err.value)


def test_default_targets(experiment):
    corpus = experiment.corpus
    assert default_targets("same_spk", corpus) == corpus.emotional_speaker_ids
    assert default_targets("cross_seen", corpus) == corpus.neutral_only_seen_ids[:4]
    assert default_targets("cross_unseen", corpus) == corpus.unseen_speaker_ids
    spec = resolve_scenario(experiment.config.scenarios[0], corpus, experiment.config.evaluation)
    assert spec.targets == corpus.emotional_speaker_ids
    assert spec.n_sentences == 4


def test_run_writes_all_artifacts(experiment):
    out = experiment.out_dir
    for rel in (
        "corpus/profiles.json",
        "corpus/train.jsonl",
        "embedder.evc",
        "speaker_vectors.json",
        "checkpoints/pretrain.evc",
        "checkpoints/ft_angry.evc",
        "checkpoints/tau_angry_agnostic.evc",
        "checkpoints/ft_angry_single_es01.evc",
        "checkpoints/tau_angry_single_es01.evc",
        "scenarios/same_spk_speaker_agnostic/report.json",
        "scenarios/same_spk_speaker_agnostic/report.md",
        "scenarios/cross_unseen_speaker_agnostic/report.json",
        "scenarios/cross_seen_single_speaker_es01/report.json",
    ):
        assert (out / rel).exists(), rel


def test_artifact_provenance_chain(experiment):
    out = experiment.out_dir
    cfg_hash = experiment.config.config_hash()
    pre = load(out / "checkpoints" / "pretrain.evc")
    assert pre.meta["config_hash"] == cfg_hash
    assert pre.meta["role"] == "pretrained"
    assert pre.meta["scope"] == "multi"
    assert pre.meta["embedder_hash"] == experiment.embedder.content_hash()
    tau = load(out / "checkpoints" / "tau_angry_agnostic.evc")
    assert tau.meta["role"] == "vector"
    assert tau.meta["scope"] == "speaker-agnostic"
    assert tau.meta["config_hash"] == cfg_hash
    assert tau.meta["source_pre"]
    single = load(out / "checkpoints" / "tau_angry_single_es01.evc")
    assert single.meta["scope"] == "single-speaker"
    doc = json.loads((out / "corpus" / "profiles.json").read_text())
    assert doc["meta"]["config_hash"] == cfg_hash
    report = read_report(out / "scenarios" / "same_spk_speaker_agnostic" / "report.json")
    assert report.metadata["config_hash"] == cfg_hash
    assert report.metadata["pre_hash"]


def test_finetune_conditions_on_neutral_vectors(experiment):
    # fine-tuned checkpoints start from the pre-trained init
    from emovec.params import content_hash

    out = experiment.out_dir
    ft = load(out / "checkpoints" / "ft_sad.evc")
    assert ft.meta["init_hash"] == content_hash(experiment.pre)
    assert ft.meta["emotion"] == "sad"


def test_case_filter_limits_reports(small_config, tmp_path):
    config = load_experiment_config(small_config)
    result = run_experiment(config, out_dir=tmp_path / "filtered", cases=["cross_unseen"])
    assert set(result.reports) == {"cross_unseen_speaker_agnostic"}
    assert (tmp_path / "filtered" / "scenarios" / "cross_unseen_speaker_agnostic").exists()
    assert not (tmp_path / "filtered" / "scenarios" / "same_spk_speaker_agnostic").exists()
    # training artifacts identical to the unfiltered run
    full = run_experiment(config, out_dir=tmp_path / "full")
    a = (tmp_path / "filtered" / "checkpoints" / "pretrain.evc").read_bytes()
    b = (tmp_path / "full" / "checkpoints" / "pretrain.evc").read_bytes()
    assert a == b


def test_unseen_vector_comes_from_reference_speech(experiment):
    table = experiment.table
    unseen = experiment.corpus.unseen_speaker_ids[0]
    assert table[unseen].source_split == "test"
