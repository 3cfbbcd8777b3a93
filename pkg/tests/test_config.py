import json

import pytest

from config import apply_overrides, load_settings, parse_settings
from errors import ConfigError
from model import ModelConfig, config_hash


def test_default_settings_file():
    settings = load_settings()
    assert settings.model.d == 3
    assert settings.pde.radii == (2.0, 4.0, 8.0, 16.0)
    assert settings.config_hash == config_hash(ModelConfig())


def test_thread_count_from_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SUPCRIT_THREADS", "2")
    path = tmp_path / "conf.json"
    path.write_text(json.dumps({"run": {"threads": 8}}))
    assert load_settings(str(path)).run.threads == 2


@pytest.mark.parametrize("data", [
    {"solver": {}},
    {"pde": {"nodez": 10}},
    {"model": {"motion": {"kind": "warp"}}},
])
def test_malformed_settings(data):
    with pytest.raises(ConfigError):
        parse_settings(data)


def test_overrides_reach_nested_keys():
    model = {"d": 3, "motion": {"kind": "radial_power", "m": 0.0}}
    merged = apply_overrides(model, {"motion.m": 2.0, "d": 4, "alpha.kind": "constant"})
    assert merged["motion"] == {"kind": "radial_power", "m": 2.0}
    assert merged["d"] == 4
    assert merged["alpha"] == {"kind": "constant"}
    assert model["motion"]["m"] == 0.0
