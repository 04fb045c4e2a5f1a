"""Experiment configuration: schema-checked INI load/save with exact round-trip.

Unknown sections or keys are errors, so a typo fails the run instead of
silently falling back to a default.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

from .core import FEATURE_DIM, PREFERENCE_SETTINGS, PreferenceWeights
from .env import TaskSpec
from .policy import PpoConfig
from .utility import UtilityConfig

REWARD_MODES = ("misaligned", "co_opt", "ours_full", "ours_no_utility")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configuration."""


@dataclass
class AnticipationSettings:
    """Windowed-predictor settings plus the shared module update cadence."""

    enabled: bool = True
    k_in: int = 10
    update_every: int = 10
    train_steps: int = 300
    learning_rate: float = 2e-3
    batch_size: int = 64

    def __post_init__(self):
        if self.k_in < 1:
            raise ConfigError("k_in must be >= 1")
        if self.update_every < 1:
            raise ConfigError("update_every must be >= 1")
        if self.train_steps < 1 or self.batch_size < 1:
            raise ConfigError("train_steps and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class ExperimentConfig:
    """Everything a run needs; (config, seed) determines every emitted byte."""

    reward_mode: str = "ours_full"
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    total_epochs: int = 300
    episodes_per_epoch: int = 8
    eval_every: int = 10
    eval_episodes: int = 20
    task: TaskSpec = field(default_factory=TaskSpec)
    preference_setting: Optional[int] = 1
    preference_weights: Optional[Tuple[float, ...]] = None
    ppo: PpoConfig = field(default_factory=PpoConfig)
    anticipation: AnticipationSettings = field(default_factory=AnticipationSettings)
    utility: UtilityConfig = field(default_factory=UtilityConfig)

    def __post_init__(self):
        if self.reward_mode not in REWARD_MODES:
            raise ConfigError(f"reward_mode must be one of {REWARD_MODES}")
        if len(self.seeds) == 0:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.total_epochs < 1 or self.episodes_per_epoch < 1:
            raise ConfigError("total_epochs and episodes_per_epoch must be >= 1")
        if self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("eval_every and eval_episodes must be >= 1")
        if (self.preference_setting is None) == (self.preference_weights is None):
            raise ConfigError("exactly one of preference setting or explicit weights required")
        if self.preference_setting is not None and self.preference_setting not in PREFERENCE_SETTINGS:
            raise ConfigError(f"unknown preference setting {self.preference_setting}")
        if self.preference_weights is not None and len(self.preference_weights) != FEATURE_DIM:
            raise ConfigError(f"explicit weights need {FEATURE_DIM} components")

    def true_weights(self) -> PreferenceWeights:
        """The human's actual preference weights for this experiment."""
        if self.preference_setting is not None:
            return PreferenceWeights.from_setting(self.preference_setting)
        return PreferenceWeights(*self.preference_weights)

    def anticipation_active(self) -> bool:
        """Prediction feeds the robot policy only in the assistance modes."""
        return self.anticipation.enabled and self.reward_mode in ("ours_full", "ours_no_utility")

    def utility_active(self) -> bool:
        return self.reward_mode == "ours_full"


# ------------------------------------------------------------ serialization
# Schema: section -> key -> (parse, render). Rendering floats with repr keeps
# the round-trip exact.
def _fmt_float(v: float) -> str:
    return repr(float(v))


def _parse_bool(s: str) -> bool:
    if s.lower() in ("true", "1", "yes", "on"):
        return True
    if s.lower() in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_seeds(s: str) -> Tuple[int, ...]:
    return tuple(int(p.strip()) for p in s.split(",") if p.strip())


def _fmt_seeds(seeds) -> str:
    return ", ".join(str(int(s)) for s in seeds)


def _parse_weights(s: str) -> Tuple[float, ...]:
    return tuple(float(p.strip()) for p in s.split(",") if p.strip())


def _fmt_weights(w) -> str:
    return ", ".join(_fmt_float(v) for v in w)


_SCHEMA = {
    "run": {
        "reward_mode": (str, str),
        "seeds": (_parse_seeds, _fmt_seeds),
        "total_epochs": (int, str),
        "episodes_per_epoch": (int, str),
        "eval_every": (int, str),
        "eval_episodes": (int, str),
    },
    "env": {
        "task": (str, str),
        "target_tolerance": (float, _fmt_float),
        "hold_steps": (int, str),
        "horizon": (int, str),
        "wipe_threshold": (float, _fmt_float),
    },
    "preference": {
        "setting": (int, str),
        "weights": (_parse_weights, _fmt_weights),
    },
    "ppo": {
        "clip": (float, _fmt_float),
        "epochs": (int, str),
        "minibatch": (int, str),
        "lr": (float, _fmt_float),
        "entropy_coef": (float, _fmt_float),
        "value_coef": (float, _fmt_float),
        "discount": (float, _fmt_float),
        "gae_lambda": (float, _fmt_float),
        "max_grad_norm": (float, _fmt_float),
    },
    "anticipation": {
        "enabled": (_parse_bool, lambda b: "true" if b else "false"),
        "k_in": (int, str),
        "update_every": (int, str),
        "train_steps": (int, str),
        "learning_rate": (float, _fmt_float),
        "batch_size": (int, str),
    },
    "utility": {
        "n_demos": (int, str),
        "n_alternatives": (int, str),
        "merge_ratio": (float, _fmt_float),
        "mcmc_steps": (int, str),
        "mcmc_burn_in": (int, str),
        "mcmc_thin": (int, str),
        "proposal_std": (float, _fmt_float),
    },
}


def _read_sections(text: str) -> dict:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    out = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        out[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            parse, _ = _SCHEMA[section][key]
            try:
                out[section][key] = parse(raw)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc
    return out


def config_from_text(text: str) -> ExperimentConfig:
    """Parse INI text into an ExperimentConfig; missing keys take defaults."""
    sec = _read_sections(text)
    run = sec.get("run", {})
    env = sec.get("env", {})
    pref = sec.get("preference", {})
    ppo = sec.get("ppo", {})
    ant = sec.get("anticipation", {})
    util = sec.get("utility", {})
    if "setting" in pref and "weights" in pref:
        raise ConfigError("give either a preference setting or explicit weights, not both")
    kwargs = {}
    if pref:
        kwargs["preference_setting"] = pref.get("setting")
        kwargs["preference_weights"] = pref.get("weights")
    task_kwargs = {{"task": "task_kind"}.get(k, k): v for k, v in env.items()}
    try:
        return ExperimentConfig(
            **{k: v for k, v in run.items()},
            task=TaskSpec(**task_kwargs),
            ppo=PpoConfig(**ppo),
            anticipation=AnticipationSettings(**ant),
            utility=UtilityConfig(**util),
            **kwargs,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    return config_from_text(Path(path).read_text(encoding="utf-8"))


def config_to_text(config: ExperimentConfig) -> str:
    """Render a config as canonical INI text; load(render(c)) == c."""
    values = {
        "run": {
            "reward_mode": config.reward_mode,
            "seeds": config.seeds,
            "total_epochs": config.total_epochs,
            "episodes_per_epoch": config.episodes_per_epoch,
            "eval_every": config.eval_every,
            "eval_episodes": config.eval_episodes,
        },
        "env": {
            "task": config.task.task_kind,
            "target_tolerance": config.task.target_tolerance,
            "hold_steps": config.task.hold_steps,
            "horizon": config.task.horizon,
            "wipe_threshold": config.task.wipe_threshold,
        },
        "preference": (
            {"setting": config.preference_setting}
            if config.preference_setting is not None
            else {"weights": config.preference_weights}
        ),
        "ppo": {k: getattr(config.ppo, k) for k in _SCHEMA["ppo"]},
        "anticipation": {k: getattr(config.anticipation, k) for k in _SCHEMA["anticipation"]},
        "utility": {k: getattr(config.utility, k) for k in _SCHEMA["utility"]},
    }
    buf = io.StringIO()
    for section, keys in values.items():
        buf.write(f"[{section}]\n")
        for key, value in keys.items():
            _, render = _SCHEMA[section][key]
            buf.write(f"{key} = {render(value)}\n")
        buf.write("\n")
    return buf.getvalue()


def save_config(config: ExperimentConfig, path) -> None:
    Path(path).write_text(config_to_text(config), encoding="utf-8")
