import json

import pytest

from codicast.config import RunConfig, load_config
from codicast.errors import ConfigError


def test_defaults_match_published_recipe():
    config = RunConfig()
    assert config.encoder.epochs == 100
    assert config.encoder.batch == 128
    assert config.encoder.lr == 1e-4
    assert config.encoder.d_e == 32
    assert config.train.epochs == 800
    assert config.train.batch == 256
    assert config.train.lr == 2e-4
    assert config.train.decay_steps == 10000
    assert config.train.decay_rate == 0.95
    assert config.schedule.N == 1000
    assert config.schedule.beta_start == 1e-4
    assert config.schedule.beta_end == 0.02
    assert config.schedule.mode == "linear"
    assert config.forecast.M == 5
    assert config.denoiser.base_width == 64
    assert config.denoiser.d == 64


def test_from_dict_roundtrip():
    config = RunConfig()
    again = RunConfig.from_dict(config.to_dict())
    assert again.to_dict() == config.to_dict()


def test_unknown_keys_all_reported():
    doc = {
        "schedule": {"N": 10, "bogus": 1, "wrong": 2},
        "train": {"nope": 3},
        "mystery": {},
    }
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict(doc)
    message = str(err.value)
    assert "schedule.bogus" in message
    assert "schedule.wrong" in message
    assert "train.nope" in message
    assert "mystery" in message


def test_value_validation():
    with pytest.raises(ConfigError, match="beta"):
        RunConfig.from_dict({"schedule": {"beta_start": 0.5, "beta_end": 0.1}})
    with pytest.raises(ConfigError, match="mode"):
        RunConfig.from_dict({"schedule": {"mode": "cosine"}})
    with pytest.raises(ConfigError, match="epochs"):
        RunConfig.from_dict({"train": {"epochs": 0}})
    with pytest.raises(ConfigError, match="dims"):
        RunConfig.from_dict({"data": {"dims": [4, 8]}})


def test_partial_override_keeps_other_defaults():
    config = RunConfig.from_dict({"schedule": {"N": 50}})
    assert config.schedule.N == 50
    assert config.schedule.beta_start == 1e-4
    assert config.train.epochs == 800


def test_load_config_from_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"forecast": {"T": 7, "M": 3}}))
    config = load_config(path)
    assert config.forecast.T == 7
    assert config.forecast.M == 3


def test_load_config_rejects_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load_config(path)


def test_load_config_none_gives_defaults():
    assert load_config(None).to_dict() == RunConfig().to_dict()
