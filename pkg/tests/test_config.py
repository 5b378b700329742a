import json
from pathlib import Path

import pytest

from starctr.config import RunConfig, apply_override, default_model_for_synthetic
from starctr.data import BatchPlan, SyntheticSpec
from starctr.errors import ConfigError
from starctr.fusion import FusionSpec
from starctr.optim import AdamConfig


def sample_dict():
    spec = SyntheticSpec(
        num_domains=3, domain_shares=(0.5, 0.3, 0.2), target_ctrs=(0.1, 0.2, 0.3),
        vocab_sizes=(10, 6), seed=4,
    )
    model = default_model_for_synthetic(spec, seed=4)
    return {
        "config_version": 1,
        "seed": 4,
        "model": model.to_dict(),
        "adam": {"learning_rate": 0.001},
        "batch": {"batch_size": 100, "seed": 4},
        "data": {"synthetic": spec.to_dict(), "train_n": 1000},
        "epochs": 2,
        "out_dir": "run",
    }


def test_round_trip_through_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(sample_dict()))
    cfg = RunConfig.load(path)
    assert cfg.seed == 4
    assert cfg.epochs == 2
    assert cfg.model.architecture == "star_plus"
    assert cfg.plan.batch_size == 100
    again = RunConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()


def test_seed_is_mandatory(tmp_path):
    d = sample_dict()
    del d["seed"]
    path = tmp_path / "run.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ConfigError, match="seed is mandatory"):
        RunConfig.load(path)


def test_config_version_is_checked(tmp_path):
    d = sample_dict()
    d["config_version"] = 99
    path = tmp_path / "run.json"
    path.write_text(json.dumps(d))
    with pytest.raises(ConfigError, match="config_version"):
        RunConfig.load(path)


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(sample_dict()))
    cfg = RunConfig.load(
        path,
        overrides=[
            "model.norm_kind=partition",
            "adam.learning_rate=0.01",
            "epochs=5",
            'model.fusion={"kind": "gate"}',
        ],
    )
    assert cfg.model.norm_kind == "partition"
    assert cfg.adam.learning_rate == 0.01
    assert cfg.epochs == 5
    assert cfg.model.fusion.kind == "gate"


def test_override_parsing_errors():
    with pytest.raises(ConfigError, match="path.to.key=value"):
        apply_override({}, "no-equals-sign")
    tree = {"a": 1}
    with pytest.raises(ConfigError, match="not an object"):
        apply_override(tree, "a.b=2")


def test_exactly_one_data_source():
    d = sample_dict()
    d["data"] = {}
    with pytest.raises(ConfigError, match="exactly one data source"):
        RunConfig.from_dict(d)


def test_missing_csv_paths_rejected(tmp_path):
    d = sample_dict()
    d["data"] = {"csv_path": str(tmp_path / "nope.csv"), "schema_path": str(tmp_path / "s.json")}
    with pytest.raises(ConfigError, match="does not exist"):
        RunConfig.from_dict(d)


def test_default_model_for_synthetic_star_forces_scalar_head():
    spec = SyntheticSpec(
        num_domains=2, domain_shares=(0.5, 0.5), target_ctrs=(0.1, 0.2),
        vocab_sizes=(4, 4), seed=0,
    )
    star = default_model_for_synthetic(spec, architecture="star", norm_kind="partition")
    assert star.tower_output_dim == 1
    assert star.fusion is None
    plus = default_model_for_synthetic(spec, architecture="star_plus")
    assert plus.fusion == FusionSpec("adaptive_add")
    assert [f.vocab_size for f in plus.fields] == [4, 4]


def test_out_dir_respects_env_root(tmp_path, monkeypatch):
    cfg = RunConfig(
        seed=1,
        model=default_model_for_synthetic(
            SyntheticSpec(
                num_domains=2, domain_shares=(0.5, 0.5), target_ctrs=(0.1, 0.2),
                vocab_sizes=(4,), seed=0,
            )
        ),
        adam=AdamConfig(),
        plan=BatchPlan(),
        synthetic=SyntheticSpec(
            num_domains=2, domain_shares=(0.5, 0.5), target_ctrs=(0.1, 0.2),
            vocab_sizes=(4,), seed=0,
        ),
        out_dir="nested/run",
    )
    monkeypatch.setenv("STARCTR_OUT_ROOT", str(tmp_path))
    assert cfg.resolved_out_dir() == tmp_path / "nested" / "run"
    monkeypatch.delenv("STARCTR_OUT_ROOT")
    assert cfg.resolved_out_dir() == Path("nested/run")
