"""Training configuration and named RNG streams."""
from __future__ import annotations

import dataclasses
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from gridsoccer.env import ConfigError, EnvConfig

PROTOCOLS = ("concurrent", "paramshare", "coordinated", "coma", "handcoded", "random")


@dataclass
class TrainConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    protocol: str = "paramshare"
    opponent: str = "handcoded"  # handcoded | random | path to a checkpoint directory
    seed: int = 0
    total_timesteps: int = 500_000
    lr: float = 1e-3
    gamma: float = 0.99
    eps_start: float = 0.5
    eps_end: float = 0.05
    eps_decay_steps: int = 300_000
    dqn_preset: str = "full"
    obs_layout: str = "basic"  # paramshare only: basic | comm (degenerate one-symbol layout)
    use_replay: bool | None = None  # None: coordinated uses replay, the others learn online
    buffer_size: int = 50_000
    minibatch: int = 1000
    train_every: int = 1
    comm_size: int = 4
    credit_mode: str = "off"
    lam: float = 0.8
    critic_lr: float = 1e-3
    goal_window: int = 200
    log_interval: int = 1000
    checkpoint_every: int = 0  # 0: only the final checkpoint
    eval_epsilon: float = 0.05
    write_trace: bool = False

    @property
    def replay(self) -> bool:
        if self.use_replay is None:
            return self.protocol == "coordinated"
        return self.use_replay

    def validate(self) -> "TrainConfig":
        self.env.validate()
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        positive = ("total_timesteps", "lr", "eps_decay_steps", "buffer_size", "minibatch", "train_every",
                    "comm_size", "goal_window", "log_interval", "critic_lr")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must be in [0, 1)")
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1]")
        for name in ("eps_start", "eps_end", "eval_epsilon"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.credit_mode not in ("off", "ratio"):
            raise ConfigError("credit_mode must be off or ratio")
        if self.obs_layout not in ("basic", "comm"):
            raise ConfigError("obs_layout must be basic or comm")
        if self.dqn_preset not in ("full", "small"):
            raise ConfigError("dqn_preset must be full or small")
        return self

    def to_mapping(self) -> dict:
        data = dataclasses.asdict(self)
        data["env"] = self.env.to_mapping()
        return data

    @classmethod
    def from_mapping(cls, data: dict) -> "TrainConfig":
        data = dict(data or {})
        env = EnvConfig.from_mapping(data.pop("env", {}) or {})
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(env=env, **data).validate()

    @classmethod
    def load(cls, path) -> "TrainConfig":
        with open(path) as fh:
            return cls.from_mapping(yaml.safe_load(fh))

    def dump(self) -> str:
        return yaml.safe_dump(self.to_mapping(), sort_keys=False)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named purpose, derived from the root seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def streams(seed: int, prefix: str) -> dict[str, np.random.Generator]:
    return {k: stream(seed, f"{prefix}.{k}") for k in ("init", "explore", "replay")}
