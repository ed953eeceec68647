"""Experiment configuration: a JSON document mirroring :class:`ExperimentConfig`.

An empty document gives the reference setup (3 domains x 10 providers, 100
steps, 100 ms budget, 10 runs).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .env import ConfigError, EnvironmentConfig

METHODS = ("nra", "rails", "raes", "opt")


@dataclass
class ExperimentConfig:
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    steps: int = 100
    d_e2e: float = 100.0
    methods: tuple[str, ...] = METHODS
    rails_iterations: int | None = None  # None: total number of providers
    p_mu: float = 0.8
    grid_divisions: int = 20
    buffer_capacity: int = 300
    update_iterations: int = 10
    learning_rate: float = 0.01
    weight_decay: float = 0.01
    input_scale: float = 100.0
    runs: int = 10
    seed: int = 0

    def validate(self) -> list[tuple[str, str]]:
        errs = self.environment.validate(prefix="environment.")

        def bad(name, msg):
            errs.append((name, msg))

        def is_int(v):
            return isinstance(v, int) and not isinstance(v, bool)

        if not is_int(self.steps) or self.steps < 1:
            bad("steps", "must be an integer >= 1")
        if not self.d_e2e > 0:
            bad("d_e2e", "must be > 0")
        if not self.methods:
            bad("methods", "must name at least one method")
        for m in self.methods:
            if m not in METHODS:
                bad("methods", f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if self.rails_iterations is not None and (not is_int(self.rails_iterations) or self.rails_iterations < 1):
            bad("rails_iterations", "must be an integer >= 1 or null")
        if not 0.0 <= self.p_mu <= 1.0:
            bad("p_mu", f"must lie in [0, 1], got {self.p_mu}")
        if not is_int(self.grid_divisions) or self.grid_divisions < 1:
            bad("grid_divisions", "must be an integer >= 1")
        if not is_int(self.buffer_capacity) or self.buffer_capacity < 1:
            bad("buffer_capacity", "must be an integer >= 1")
        if not is_int(self.update_iterations) or self.update_iterations < 0:
            bad("update_iterations", "must be an integer >= 0")
        if not self.learning_rate > 0:
            bad("learning_rate", "must be > 0")
        if not self.weight_decay >= 0:
            bad("weight_decay", "must be >= 0")
        if not self.input_scale > 0:
            bad("input_scale", "must be > 0")
        if not is_int(self.runs) or self.runs < 1:
            bad("runs", "must be an integer >= 1")
        if not is_int(self.seed) or self.seed < 0:
            bad("seed", "must be a nonnegative integer")
        return errs

    def check(self) -> "ExperimentConfig":
        errs = self.validate()
        if errs:
            raise ConfigError(errs)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError([("", "config must be a JSON object")])
        errs = []
        known = {f.name for f in dataclasses.fields(cls)}
        errs += [(k, "unknown field") for k in data if k not in known]
        env_data = data.get("environment", {})
        if not isinstance(env_data, dict):
            errs.append(("environment", "must be an object"))
            env_data = {}
        env_known = {f.name for f in dataclasses.fields(EnvironmentConfig)}
        errs += [(f"environment.{k}", "unknown field") for k in env_data if k not in env_known]
        if errs:
            raise ConfigError(errs)
        env_kwargs = {}
        for k, v in env_data.items():
            env_kwargs[k] = tuple(v) if isinstance(v, list) and k != "providers_per_domain" else v
        kwargs = {k: v for k, v in data.items() if k != "environment"}
        if "methods" in kwargs:
            kwargs["methods"] = tuple(kwargs["methods"])
        try:
            cfg = cls(environment=EnvironmentConfig(**env_kwargs), **kwargs)
            errs = cfg.validate()
        except TypeError as exc:
            raise ConfigError([("", str(exc))]) from exc
        if errs:
            raise ConfigError(errs)
        return cfg

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().check()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON: {exc}")]) from exc
    return ExperimentConfig.from_dict(data)
