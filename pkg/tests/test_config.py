"""Config schema validation and exact serialization round-trip."""

import pytest

from coassist.config import (
    AnticipationSettings,
    ConfigError,
    ExperimentConfig,
    config_from_text,
    config_to_text,
    load_config,
    save_config,
)
from coassist.env import TaskSpec


def test_defaults_valid():
    cfg = ExperimentConfig()
    assert cfg.reward_mode == "ours_full"
    assert cfg.seeds == (0, 1, 2, 3, 4)
    assert cfg.true_weights().setting_id == 1
    assert cfg.anticipation_active()
    assert cfg.utility_active()


def test_round_trip_equality():
    cfg = ExperimentConfig(reward_mode="co_opt", seeds=(7, 11), total_epochs=50,
                           task=TaskSpec(task_kind="drink"), preference_setting=3)
    text = config_to_text(cfg)
    back = config_from_text(text)
    assert back == cfg


def test_round_trip_bytes_stable(tmp_path):
    cfg = ExperimentConfig()
    p1 = tmp_path / "a.ini"
    p2 = tmp_path / "b.ini"
    save_config(cfg, p1)
    save_config(load_config(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_explicit_weights_round_trip():
    cfg = ExperimentConfig(preference_setting=None,
                           preference_weights=(0.25, 0.125, 1.0 / 3.0))
    back = config_from_text(config_to_text(cfg))
    assert back == cfg
    assert back.true_weights().w_high_force == 1.0 / 3.0


def test_partial_file_takes_defaults():
    cfg = config_from_text("[run]\nreward_mode = misaligned\n")
    assert cfg.reward_mode == "misaligned"
    assert cfg.total_epochs == ExperimentConfig().total_epochs
    assert not cfg.anticipation_active()


def test_unknown_section_rejected():
    with pytest.raises(ConfigError, match="unknown config section"):
        config_from_text("[rnu]\nreward_mode = misaligned\n")


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_text("[run]\nreward_modes = misaligned\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError, match="bad value"):
        config_from_text("[run]\ntotal_epochs = many\n")


def test_setting_and_weights_conflict():
    with pytest.raises(ConfigError, match="not both"):
        config_from_text("[preference]\nsetting = 1\nweights = 1.0, 0.1, 5.0\n")


def test_neither_setting_nor_weights_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig(preference_setting=None, preference_weights=None)


def test_bad_reward_mode():
    with pytest.raises(ConfigError, match="reward_mode"):
        ExperimentConfig(reward_mode="aligned")


def test_empty_seeds():
    with pytest.raises(ConfigError, match="seeds"):
        ExperimentConfig(seeds=())


def test_duplicate_seeds():
    with pytest.raises(ConfigError, match="distinct"):
        ExperimentConfig(seeds=(3, 3))


def test_bad_task_kind_wrapped():
    with pytest.raises(ConfigError):
        config_from_text("[env]\ntask = fold_laundry\n")


def test_anticipation_validation():
    with pytest.raises(ConfigError, match="update_every"):
        AnticipationSettings(update_every=0)


def test_anticipation_gating_by_mode():
    cfg = ExperimentConfig(reward_mode="misaligned")
    assert not cfg.anticipation_active()
    cfg = ExperimentConfig(reward_mode="ours_no_utility")
    assert cfg.anticipation_active()
    assert not cfg.utility_active()
    cfg = ExperimentConfig(
        anticipation=AnticipationSettings(enabled=False))
    assert not cfg.anticipation_active()
    assert cfg.utility_active()


def test_unknown_preference_setting():
    with pytest.raises(ConfigError, match="unknown preference setting"):
        ExperimentConfig(preference_setting=9)
