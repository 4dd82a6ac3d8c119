"""Experiment configuration: one JSON document, three blocks.

Loading validates every numeric range and rejects unknown keys; the
canonical serialization (sorted keys, compact separators) feeds a stable
config hash so runs can be tied to the exact settings that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from typing import Any, Sequence

from .errors import ConfigurationError
from .trainers import ALGOS, TrainerConfig


@dataclass
class EnvBlock:
    n_states: int = 100
    n_agents: int = 6
    action_counts: list[int] = field(default_factory=lambda: [5] * 6)
    gamma: float = 0.99
    seed: int = 0
    transition_alpha: float = 0.2
    reward_low: float = 0.0
    reward_high: float = 1.0
    horizon: int = 100


@dataclass
class TrainBlock:
    algo: str = "dpo"
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    iterations: int = 40
    batch_episodes: int = 16
    epochs: int = 5
    actor_lr: float = 0.1
    critic_lr: float = 1.0
    clip_eps: float = 0.2
    beta1_init: float = 0.01
    beta2_init: float = 0.01
    d_target: float = 0.1
    delta: float = 1.5
    omega: float = 2.0
    exact_advantage: bool = False
    normalize_advantages: bool = False
    critic_target_mode: str = "mc"
    eval_exact_every: int = 1
    iql_alpha: float = 0.1
    iql_eps_start: float = 1.0
    iql_eps_final: float = 0.05


@dataclass
class OutputBlock:
    directory: str = "runs"
    emit_svg: bool = False


@dataclass
class ExperimentConfig:
    env: EnvBlock = field(default_factory=EnvBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def validate(self) -> None:
        e, t = self.env, self.train
        if e.n_states < 1:
            raise ConfigurationError("env.n_states must be >= 1")
        if e.n_agents < 1:
            raise ConfigurationError("env.n_agents must be >= 1")
        if len(e.action_counts) != e.n_agents:
            raise ConfigurationError(
                "env.action_counts length must equal env.n_agents")
        if any(a < 1 for a in e.action_counts):
            raise ConfigurationError("env.action_counts entries must be >= 1")
        if not 0.0 <= e.gamma < 1.0:
            raise ConfigurationError("env.gamma must be in [0, 1)")
        if e.transition_alpha <= 0:
            raise ConfigurationError("env.transition_alpha must be > 0")
        if e.reward_high < e.reward_low:
            raise ConfigurationError(
                "env.reward_high must be >= env.reward_low")
        if e.horizon < 1:
            raise ConfigurationError("env.horizon must be >= 1")
        if t.algo not in ALGOS:
            raise ConfigurationError(
                f"train.algo must be one of {list(ALGOS)}")
        if not t.seeds:
            raise ConfigurationError("train.seeds must be non-empty")
        if len(set(t.seeds)) != len(t.seeds):
            raise ConfigurationError("train.seeds must be distinct")
        try:
            self.trainer_config().validate()
        except ConfigurationError as exc:
            raise ConfigurationError(f"train.{exc}") from None
        if not self.output.directory:
            raise ConfigurationError("output.directory must be non-empty")

    def trainer_config(self) -> TrainerConfig:
        t = self.train
        return TrainerConfig(
            iterations=t.iterations, batch_episodes=t.batch_episodes,
            horizon=self.env.horizon, epochs=t.epochs, actor_lr=t.actor_lr,
            critic_lr=t.critic_lr, clip_eps=t.clip_eps,
            beta1_init=t.beta1_init, beta2_init=t.beta2_init,
            d_target=t.d_target, delta=t.delta, omega=t.omega,
            exact_advantage=t.exact_advantage,
            normalize_advantages=t.normalize_advantages,
            critic_target_mode=t.critic_target_mode,
            eval_exact_every=t.eval_exact_every, iql_alpha=t.iql_alpha,
            iql_eps_start=t.iql_eps_start, iql_eps_final=t.iql_eps_final)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_BLOCKS = {"env": EnvBlock, "train": TrainBlock, "output": OutputBlock}


def _build_block(cls, data: dict, prefix: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigurationError(
            f"unknown key {prefix}.{sorted(unknown)[0]}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        want = f.type
        # coerce ints to float where a float is expected; forbid the reverse
        if want == "float" and isinstance(value, int) \
                and not isinstance(value, bool):
            value = float(value)
        if want == "int" and (isinstance(value, bool)
                              or not isinstance(value, int)):
            raise ConfigurationError(f"{prefix}.{name} must be an integer")
        if want == "float" and not isinstance(value, float):
            raise ConfigurationError(f"{prefix}.{name} must be a number")
        if want == "bool" and not isinstance(value, bool):
            raise ConfigurationError(f"{prefix}.{name} must be a boolean")
        if want == "str" and not isinstance(value, str):
            raise ConfigurationError(f"{prefix}.{name} must be a string")
        if want.startswith("list[int]"):
            if (not isinstance(value, list)
                    or any(isinstance(v, bool) or not isinstance(v, int)
                           for v in value)):
                raise ConfigurationError(
                    f"{prefix}.{name} must be a list of integers")
            value = list(value)
        kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a JSON object")
    unknown = set(data) - set(_BLOCKS)
    if unknown:
        raise ConfigurationError(f"unknown config block {sorted(unknown)[0]}")
    blocks = {name: _build_block(cls, data.get(name, {}), name)
              for name, cls in _BLOCKS.items()}
    cfg = ExperimentConfig(**blocks)
    cfg.validate()
    return cfg


def load_config(path: str | None,
                overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read a JSON config file (defaults if path is None) and apply
    key=value overrides with dotted paths, e.g. train.d_target=0.01."""
    data: dict = {}
    if path is not None:
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"config is not valid JSON: {exc}")
    for item in overrides:
        data = _apply_override(data, item)
    return config_from_dict(data)


def _apply_override(data: dict, item: str) -> dict:
    if "=" not in item:
        raise ConfigurationError(
            f"override '{item}' must look like block.key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigurationError(
            f"override key '{key}' must look like block.key")
    try:
        value: Any = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings like mc need no quotes
    block, name = parts
    out = dict(data)
    out[block] = dict(out.get(block, {}))
    out[block][name] = value
    return out


def canonical_json(config: ExperimentConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True,
                      separators=(",", ":"))


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


def save_config(config: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
