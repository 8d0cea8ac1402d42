import json

import pytest

from vton_lab.config import RunConfig, load_config
from vton_lab.errors import InvalidArgument
from vton_lab.training import make_plan


def test_defaults_validate_and_round_trip():
    cfg = RunConfig()
    assert [p.frame_length for p in cfg.plan.phases] == [1, 8, 16, 32, 64]
    assert cfg.sampler.num_steps == 1000 and cfg.training.dropout_rate == 0.1
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg and again.dumps() == cfg.dumps()


def test_preset_and_explicit_plans_agree():
    preset = RunConfig.from_dict({"plan": {"frame_lengths": [1, 8, 16], "iterations": {"image": 5}}})
    explicit = RunConfig.from_dict({"plan": preset.plan.to_dict()})
    assert preset.plan == explicit.plan == make_plan((1, 8, 16), iterations={"image": 5})


def test_file_round_trip(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(RunConfig(seed=3).dumps())
    assert load_config(path).seed == 3
    assert load_config(None) == RunConfig()
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{nope")
    with pytest.raises(InvalidArgument):
        load_config(tmp_path / "bad.json")


@pytest.mark.parametrize(
    "doc",
    [
        {"colour": 1},
        {"model": {"base_channel": 8}},
        {"schedule": {"steps": 10}},
        {"training": {"lr": 1}},
        {"sampler": {"weights": [1, 1, 1, 1]}},
        {"data": {"frames": 3}},
        {"eval": {"frames": 3}},
        {"plan": {"frame_lengths": [1, 8], "bogus": 1}},
        {"plan": {"phases": [], "extra": 1}},
    ],
)
def test_unknown_keys_rejected(doc):
    with pytest.raises(InvalidArgument):
        RunConfig.from_dict(doc)


@pytest.mark.parametrize(
    "doc",
    [
        {"model": {"image_channels": 4}},
        {"sampler": {"cfg_weights": [1, 1, 1]}},
        {"data": {"height": 30}},
        {"data": {"num_frames": 32}},
        {"eval": {"num_frames": 15}},
        {"sampler": {"num_steps": 2000}},
        {"schedule": {"kind": "sigmoid"}},
        {"training": {"dropout_rate": 1.5}},
        {"format_version": "2"},
    ],
)
def test_invalid_values_rejected(doc):
    with pytest.raises(InvalidArgument):
        RunConfig.from_dict(doc)


def test_hashes():
    a = RunConfig()
    b = RunConfig.from_dict({"data": {"dir": "/somewhere"}, "sampler": {"seed": 5}})
    assert a.training_hash() == b.training_hash()
    assert a.config_hash() != b.config_hash()
    c = RunConfig(seed=1)
    assert c.training_hash() != a.training_hash()
