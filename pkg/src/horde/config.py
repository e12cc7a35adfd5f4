"""Experiment configuration: a flat INI document, fully validated.

parse_config collects every violation before failing, so a bad file reports
all its problems at once.  Step sizes accept plain floats, a quotient like
``0.1/457``, the token ``0.1/active`` (divide by the feature coder's active
count, resolved once the feature layout is known), and for alpha_w a
multiple of alpha_theta like ``0.001*alpha_theta``.

Three named presets reproduce the published protocols:
  paper-chain       100-run chain study with the theta reset at episode 1000
  paper-pen-795     795 constant-action questions with test excursions
  paper-gibbs-1000  1000 random Gibbs policies, no excursions, scalar MSPBE
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, fields

from .errors import ConfigValidationError

__all__ = ["ExperimentConfig", "parse_config", "serialize_config", "preset", "PRESET_NAMES"]


@dataclass
class ExperimentConfig:
    environment: str = "pen"
    seed: int = 0
    steps: int = 10000
    episodes: int = 1000
    runs: int = 1
    workers: int = 1
    log_every: int = 500
    journal: bool = True
    snapshots: bool = False
    realtime: bool = False
    record_path: str | None = None
    quarantine_limit: int = 0

    chain_p_right_target: float = 0.95
    chain_p_right_behaviour: float = 0.2
    chain_gamma: float = 0.9
    chain_feature_kind: str = "inverted"
    reset_episode: int | None = None

    pen_sensor_noise: float = 0.02
    replay_path: str | None = None
    reset_step: int | None = None
    reset_kind: str = "zero"

    features: str = "compact"
    compact_single_tilings: int = 2
    compact_single_tiles: int = 16
    compact_pair_tilings: int = 0
    compact_pair_tiles: int = 4

    questions: str = "constant"
    gammas: tuple[float, ...] = (0.0, 0.5, 0.8)
    gibbs_count: int = 1000
    gibbs_nonzeros: int = 60

    alpha_theta: str = "0.1/active"
    alpha_w: str = "0.001*alpha_theta"
    lam: float = 0.9
    repeat_probability: float = 0.5

    excursions: bool = True
    mean_interval: float = 50.0
    test_steps: int = 50
    recenter_steps: int = 20
    learn_during_recenter: bool = False
    clear_traces_on_test: bool = False

    mspbe_tau: float = 1000.0
    nmsre_tau: float = 20.0
    vector_estimate: bool = True
    rho_weighted_traces: bool = False
    covariance_epsilon: float = 1e-8

    def resolve_alpha_theta(self, active_count: int) -> float:
        return _resolve_rate(self.alpha_theta, active_count)

    def resolve_alpha_w(self, active_count: int) -> float:
        expr = self.alpha_w
        if expr.endswith("*alpha_theta"):
            return float(expr[: -len("*alpha_theta")]) * self.resolve_alpha_theta(active_count)
        return _resolve_rate(expr, active_count)


def _resolve_rate(expr: str, active_count: int) -> float:
    expr = expr.strip()
    if "/" in expr:
        num, den = expr.split("/", 1)
        den = den.strip()
        d = float(active_count) if den == "active" else float(den)
        return float(num) / d
    return float(expr)


def _check_rate(expr: str, name: str, errors: list):
    try:
        value = _resolve_rate(expr, 457)
    except ValueError:
        if name == "alpha_w" and expr.endswith("*alpha_theta"):
            try:
                float(expr[: -len("*alpha_theta")])
                return
            except ValueError:
                pass
        errors.append(f"learning.{name}: cannot parse rate {expr!r}")
        return
    if value <= 0:
        errors.append(f"learning.{name}: must be positive, got {expr!r}")


# section -> key -> (attribute, type tag)
_SCHEMA = {
    "experiment": {
        "preset": ("__preset__", "str"),
        "environment": ("environment", "str"),
        "seed": ("seed", "int"),
        "steps": ("steps", "int"),
        "episodes": ("episodes", "int"),
        "runs": ("runs", "int"),
        "workers": ("workers", "int"),
        "log_every": ("log_every", "int"),
        "journal": ("journal", "bool"),
        "snapshots": ("snapshots", "bool"),
        "realtime": ("realtime", "bool"),
        "record": ("record_path", "str"),
        "quarantine_limit": ("quarantine_limit", "int"),
    },
    "chain": {
        "p_right_target": ("chain_p_right_target", "float"),
        "p_right_behaviour": ("chain_p_right_behaviour", "float"),
        "gamma": ("chain_gamma", "float"),
        "feature_kind": ("chain_feature_kind", "str"),
        "reset_episode": ("reset_episode", "int"),
    },
    "pen": {"sensor_noise": ("pen_sensor_noise", "float")},
    "replay": {"path": ("replay_path", "str")},
    "features": {
        "preset": ("features", "str"),
        "single_tilings": ("compact_single_tilings", "int"),
        "single_tiles": ("compact_single_tiles", "int"),
        "pair_tilings": ("compact_pair_tilings", "int"),
        "pair_tiles": ("compact_pair_tiles", "int"),
    },
    "questions": {
        "kind": ("questions", "str"),
        "gammas": ("gammas", "floats"),
        "count": ("gibbs_count", "int"),
        "nonzeros": ("gibbs_nonzeros", "int"),
    },
    "learning": {
        "alpha_theta": ("alpha_theta", "rate"),
        "alpha_w": ("alpha_w", "rate"),
        "lambda": ("lam", "float"),
        "repeat_probability": ("repeat_probability", "float"),
    },
    "interventions": {
        "reset_step": ("reset_step", "int"),
        "reset_kind": ("reset_kind", "str"),
    },
    "scheduler": {
        "enabled": ("excursions", "bool"),
        "mean_interval": ("mean_interval", "float"),
        "test_steps": ("test_steps", "int"),
        "recenter_steps": ("recenter_steps", "int"),
        "learn_during_recenter": ("learn_during_recenter", "bool"),
        "clear_traces_on_test": ("clear_traces_on_test", "bool"),
    },
    "evaluation": {
        "mspbe_tau": ("mspbe_tau", "float"),
        "nmsre_tau": ("nmsre_tau", "float"),
        "vector_estimate": ("vector_estimate", "bool"),
        "rho_weighted": ("rho_weighted_traces", "bool"),
        "covariance_epsilon": ("covariance_epsilon", "float"),
    },
}

_BOOL = {"true": True, "1": True, "yes": True, "on": True,
         "false": False, "0": False, "no": False, "off": False}


def _preset_overrides(name: str) -> dict:
    if name == "paper-chain":
        return dict(
            environment="chain", seed=1234, runs=100, episodes=1300,
            reset_episode=1000, reset_kind="uniform01",
            chain_gamma=0.9, alpha_theta="0.05", alpha_w="0.1", lam=0.0,
            mspbe_tau=100.0, log_every=1, excursions=False, workers=1,
        )
    if name == "paper-pen-795":
        return dict(
            environment="pen", seed=2012, steps=200000,
            features="paper-scale", questions="constant", gammas=(0.0, 0.5, 0.8),
            alpha_theta="0.1/active", alpha_w="0.001*alpha_theta", lam=0.9,
            excursions=True, mean_interval=50.0, test_steps=50, recenter_steps=20,
            mspbe_tau=1000.0, nmsre_tau=20.0, log_every=500,
            clear_traces_on_test=True,
        )
    if name == "paper-gibbs-1000":
        return dict(
            environment="pen", seed=2013, steps=10000,
            features="paper-scale", questions="gibbs",
            gammas=(0.0, 0.5, 0.8, 0.95), gibbs_count=1000, gibbs_nonzeros=60,
            alpha_theta="0.1/active", alpha_w="0.001*alpha_theta", lam=0.9,
            excursions=False, vector_estimate=False, log_every=500,
        )
    raise KeyError(name)


PRESET_NAMES = ("paper-chain", "paper-pen-795", "paper-gibbs-1000")


def preset(name: str) -> ExperimentConfig:
    if name not in PRESET_NAMES:
        raise ConfigValidationError([f"unknown preset {name!r}; known: {', '.join(PRESET_NAMES)}"])
    return ExperimentConfig(**_preset_overrides(name))


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises ConfigValidationError listing every problem."""
    errors: list[str] = []
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigValidationError([f"syntax: {err}"]) from None

    values: dict[str, object] = {}
    preset_name = parser.get("experiment", "preset", fallback=None)
    if preset_name is not None:
        if preset_name in PRESET_NAMES:
            values.update(_preset_overrides(preset_name))
        else:
            errors.append(f"experiment.preset: unknown preset {preset_name!r}")

    for section in parser.sections():
        if section not in _SCHEMA:
            errors.append(f"unknown section [{section}]")
            continue
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                errors.append(f"unknown key {section}.{key}")
                continue
            attr, kind = schema[key]
            if attr == "__preset__":
                continue
            try:
                if kind == "int":
                    values[attr] = int(raw)
                elif kind == "float":
                    values[attr] = float(raw)
                elif kind == "bool":
                    values[attr] = _BOOL[raw.strip().lower()]
                elif kind == "floats":
                    values[attr] = tuple(float(v) for v in raw.split(",") if v.strip())
                elif kind == "rate":
                    values[attr] = raw.strip()
                else:
                    values[attr] = raw.strip()
            except (ValueError, KeyError):
                errors.append(f"{section}.{key}: cannot parse {raw!r} as {kind}")

    config = ExperimentConfig(**{k: v for k, v in values.items() if k != "__preset__"})
    errors.extend(validate(config, seed_given="seed" in values or preset_name in PRESET_NAMES))
    if errors:
        raise ConfigValidationError(errors)
    return config


def validate(config: ExperimentConfig, seed_given: bool = True) -> list[str]:
    """Range and consistency checks; returns the full list of violations."""
    errors = []
    if config.environment not in ("chain", "pen", "replay"):
        errors.append(f"experiment.environment: unknown environment {config.environment!r}")
    if not seed_given:
        errors.append("experiment.seed: an explicit seed is required")
    if config.runs < 1:
        errors.append("experiment.runs: must be >= 1")
    if config.workers < 1:
        errors.append("experiment.workers: must be >= 1")
    if config.steps < 0:
        errors.append("experiment.steps: must be >= 0")
    if config.episodes < 0:
        errors.append("experiment.episodes: must be >= 0")
    if config.log_every < 1:
        errors.append("experiment.log_every: must be >= 1")
    if not 0.0 <= config.lam <= 1.0:
        errors.append(f"learning.lambda: must be in [0, 1], got {config.lam}")
    if not 0.0 <= config.repeat_probability <= 1.0:
        errors.append("learning.repeat_probability: must be in [0, 1]")
    _check_rate(config.alpha_theta, "alpha_theta", errors)
    if not config.alpha_w.endswith("*alpha_theta"):
        _check_rate(config.alpha_w, "alpha_w", errors)
    else:
        _check_rate(config.alpha_w[: -len("*alpha_theta")], "alpha_w", errors)
    if config.environment == "chain":
        if not 0.0 < config.chain_gamma <= 1.0:
            errors.append("chain.gamma: must be in (0, 1]")
        for key, p in (("p_right_target", config.chain_p_right_target),
                       ("p_right_behaviour", config.chain_p_right_behaviour)):
            if not 0.0 < p < 1.0:
                errors.append(f"chain.{key}: must be in (0, 1)")
        if config.chain_feature_kind not in ("inverted", "tabular"):
            errors.append("chain.feature_kind: must be 'inverted' or 'tabular'")
    if config.environment == "replay" and not config.replay_path:
        errors.append("replay.path: required for the replay environment")
    if config.environment == "pen" and not config.pen_sensor_noise >= 0:
        errors.append("pen.sensor_noise: must be >= 0")
    if config.features not in ("compact", "paper-scale"):
        errors.append(f"features.preset: unknown layout {config.features!r}")
    if config.questions not in ("constant", "gibbs"):
        errors.append(f"questions.kind: unknown kind {config.questions!r}")
    for g in config.gammas:
        if not 0.0 <= g < 1.0:
            errors.append(f"questions.gammas: every gamma must be in [0, 1), got {g}")
    if config.gibbs_count < 1:
        errors.append("questions.count: must be >= 1")
    if config.gibbs_nonzeros < 1:
        errors.append("questions.nonzeros: must be >= 1")
    if config.excursions:
        if config.mean_interval < 1.0:
            errors.append("scheduler.mean_interval: must be >= 1")
        if config.test_steps < 1 or config.recenter_steps < 1:
            errors.append("scheduler phase lengths must be >= 1")
    if config.mspbe_tau < 1.0 or config.nmsre_tau < 1.0:
        errors.append("evaluation taus must be >= 1")
    if config.covariance_epsilon <= 0:
        errors.append("evaluation.covariance_epsilon: must be positive")
    if config.reset_kind not in ("zero", "uniform01"):
        errors.append("interventions.reset_kind: must be 'zero' or 'uniform01'")
    if config.quarantine_limit < 0:
        errors.append("experiment.quarantine_limit: must be >= 0")
    return errors


_REVERSE = {
    attr: (section, key)
    for section, keys in _SCHEMA.items()
    for key, (attr, _) in keys.items()
    if attr != "__preset__"
}


def serialize_config(config: ExperimentConfig) -> str:
    """INI text such that parse_config(serialize_config(c)) == c."""
    parser = configparser.ConfigParser(interpolation=None)
    for f in fields(ExperimentConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        section, key = _REVERSE[f.name]
        if not parser.has_section(section):
            parser.add_section(section)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, tuple):
            text = ",".join(repr(v) for v in value)
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        parser.set(section, key, text)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
