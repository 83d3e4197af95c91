"""Run configuration: a flat key=value file with environment overrides.

Values are typed by the RunConfig field they bind to. Environment variables
prefixed FAIRLEAD_ (for example FAIRLEAD_EPISODES=5000) override file
values, and explicit keyword overrides (typically CLI flags) take highest
precedence.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field

from .errors import ConfigurationError

ENV_PREFIX = "FAIRLEAD_"

SELECTORS = ("fixed", "alternating", "vote", "jamql-naive", "jamql-prefinal",
             "jamql", "threshold")
ENVIRONMENTS = ("pd", "chicken", "bos", "rc1", "rc2")
SCHEDULES = ("sequential", "simultaneous")


@dataclass
class RunConfig:
    env: str = "chicken"
    agents: int = 2
    selector: str = "jamql"
    phi: str = "min"
    episodes: int = 200000
    steps_per_episode: int = 4
    seeds: int = 5
    seed: int = 0
    schedule: str = "sequential"
    block_episodes: int = 100
    alpha: float = 0.1
    gamma_agents: float = 0.9
    gamma_mediator: float = 0.99
    epsilon_start: float = 0.5
    epsilon_end: float = 0.01
    eval_every: int = 1000
    eval_episodes: int = 20
    fixed_agent: int = 0
    # resource-collection parameters
    grid_width: int = 5
    grid_height: int = 5
    step_limit: int = 50
    max_collected: int = 2
    aux_reward: float = 0.1
    aux_radius: int = 1
    randomize_layout: bool = False
    # function approximation (unit-scale experiments only)
    buffer_capacity: int = 100000
    batch_size: int = 128
    learning_rate: float = 0.0001
    target_sync: int = 500
    out: str = ""

    def validate(self):
        if self.env not in ENVIRONMENTS:
            raise ConfigurationError(f"unknown env {self.env!r}")
        if self.selector not in SELECTORS:
            raise ConfigurationError(f"unknown selector {self.selector!r}")
        if self.schedule not in SCHEDULES:
            raise ConfigurationError(f"unknown schedule {self.schedule!r}")
        if not 0 <= self.gamma_agents < 1 or not 0 <= self.gamma_mediator < 1:
            raise ConfigurationError("discount factors must lie in [0, 1)")
        if self.episodes < 1:
            raise ConfigurationError("episodes must be positive")
        if self.agents < 2:
            raise ConfigurationError("need at least two agents")
        return self

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    def canonical_items(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)

    def config_hash(self):
        text = "\n".join(f"{k}={v!r}" for k, v in self.canonical_items())
        return hashlib.sha256(text.encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(key, raw, line_no=None, source="config"):
    f = _FIELDS.get(key)
    where = f"{source} line {line_no}" if line_no is not None else source
    if f is None:
        raise ConfigurationError(f"{where}: unknown key {key!r}")
    try:
        if f.type in ("int", int):
            return int(raw)
        if f.type in ("float", float):
            return float(raw)
        if f.type in ("bool", bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return raw
    except ValueError as exc:
        raise ConfigurationError(f"{where}: key {key!r}: {exc}") from exc


def parse_config(path=None, apply_env=True, **overrides):
    """Build a RunConfig from a file, the environment, and overrides."""
    values = {}
    if path is not None:
        with open(path) as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigurationError(
                        f"{path} line {line_no}: expected key = value")
                key, raw = (part.strip() for part in line.split("=", 1))
                values[key] = _convert(key, raw, line_no, source=str(path))
    if apply_env:
        for key in _FIELDS:
            raw = os.environ.get(ENV_PREFIX + key.upper())
            if raw is not None:
                values[key] = _convert(key, raw, source="environment")
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _FIELDS:
            raise ConfigurationError(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values).validate()
