from __future__ import annotations

import pytest
from pydantic import ValidationError

from app.config import DEFAULT_CONFIG_PATH, load_config
from app.errors import ConfigError
from app.schemas import AppConfig, GmmSpecIn, LineParamsIn, McConfig


def test_defaults_without_a_file():
    config = load_config()
    assert config == AppConfig()
    assert config.egle.m_max == 10
    assert config.egle.em.variance_floor == 1e-12
    assert config.mad.window == 600


def test_shipped_config_matches_defaults():
    config = load_config(DEFAULT_CONFIG_PATH)
    assert config.scenario.r == 0.00904
    assert config.noise_c.to_spec().variances.tolist() == pytest.approx([0.0015**2, 0.0015**2])
    assert config.egle.eps0 == 1e-6
    assert config.mc.methods == ["LS", "TLS", "EGLE_FULL"]


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_invalid_toml(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[egle\nm_max = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_unknown_key(tmp_path):
    path = tmp_path / "extra.toml"
    path.write_text("[egle]\nm_max = 3\nrestarts = 2\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_partial_file_keeps_other_defaults(tmp_path):
    path = tmp_path / "partial.toml"
    path.write_text("[egle]\nm_max = 4\n\n[scenario]\ns = 30\nseed = 9\n", encoding="utf-8")
    config = load_config(path)
    assert config.egle.m_max == 4
    assert config.egle.i_max == 100
    scenario = config.scenario_config()
    assert scenario.s == 30 and scenario.seed == 9
    assert config.scenario_config(seed=1).seed == 1


def test_mc_config_overrides():
    mc = AppConfig().mc_config(seed=4, runs=7, methods=["LS"])
    assert (mc.base_seed, mc.runs, mc.methods) == (4, 7, ["LS"])


def test_noise_spec_needs_exactly_one_spread():
    with pytest.raises(ValidationError):
        GmmSpecIn(weights=[1.0], means=[0.0], stds=[1.0], variances=[1.0])
    with pytest.raises(ValidationError):
        GmmSpecIn(weights=[1.0], means=[0.0])
    with pytest.raises(ValidationError):
        GmmSpecIn(weights=[0.5, 0.5], means=[0.0], stds=[1.0])


def test_zero_reactance_rejected():
    with pytest.raises(ValidationError):
        LineParamsIn(x=0.0)


def test_methods_are_deduplicated_and_checked():
    assert McConfig(methods=["LS", "LS", "TLS"]).methods == ["LS", "TLS"]
    with pytest.raises(ValidationError):
        McConfig(methods=["KALMAN"])
    with pytest.raises(ValidationError):
        McConfig(ri_range=(0.3, 0.1))
