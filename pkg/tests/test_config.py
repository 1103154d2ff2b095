import json

import pytest

from churnlab.config import ExperimentConfig, digest
from churnlab.labeling import ConfigError


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.folds == 10 and cfg.uncertainty == "sem" and cfg.cohort is None
    assert len(cfg.architectures) == 7
    # latest first date whose eight labels are all final on a 365-day span
    assert cfg.sampling_start(365) == 365 - 37 - 7 * 18 == 202


def test_master_seed_reaches_every_component():
    cfg = ExperimentConfig(seed=42)
    assert cfg.synth.seed == cfg.train.seed == cfg.forest.seed == 42


def test_dict_round_trip(tmp_path):
    cfg = ExperimentConfig.from_dict({"seed": 3, "synth": {"player_count": 10}, "folds": 4, "architectures": ["rf"]})
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.load(path) == cfg


@pytest.mark.parametrize("d", [
    {"bogus": 1},
    {"synth": {"seed": 4}},
    {"train": {"batch": 3}},
    {"seed": -1},
    {"seed": True},
    {"folds": 1},
    {"architectures": ["svm"]},
    {"cohort": "whales"},
    {"uncertainty": "mad"},
    {"events": "e.csv"},
    {"churn": {"observation_days": 9}},
])
def test_invalid_configs(d):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(d)


def test_bad_json_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        ExperimentConfig.load(path)


def test_stage_hashes_invalidate_downstream_only():
    base = ExperimentConfig().stage_hashes()
    folds = ExperimentConfig(folds=5).stage_hashes()
    assert [base[s] == folds[s] for s in ("synth", "label", "featurize", "train", "eval")] == [True] * 4 + [False]
    seed = ExperimentConfig(seed=1).stage_hashes()
    assert all(base[s] != seed[s] for s in base)
    lookback = ExperimentConfig(lookback_days=90).stage_hashes()
    assert base["label"] == lookback["label"] and base["featurize"] != lookback["featurize"]


def test_digest_is_canonical():
    assert digest({"a": 1, "b": [1, 2]}) == digest({"b": [1, 2], "a": 1})
    assert len(digest({})) == 16


def test_overrides():
    cfg = ExperimentConfig().with_overrides(seed=5, folds=None, cohort="converted")
    assert cfg.seed == 5 and cfg.folds == 10 and cfg.cohort == "converted" and cfg.synth.seed == 5
