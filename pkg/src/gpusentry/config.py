"""Runtime configuration loaded from an optional JSON file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .detector import Thresholds, WindowConfig
from .errors import ConfigError
from .metrics import DEFAULT_CAPACITY, DEFAULT_PERIOD_S
from .sources import DEFAULT_PMON_COMMAND, DEFAULT_QUERY_COMMAND

OUTPUT_MODES = ("human", "json")


@dataclass(frozen=True)
class Config:
    thresholds: Thresholds = field(default_factory=Thresholds)
    period_s: float = DEFAULT_PERIOD_S
    window_capacity: int = DEFAULT_CAPACITY
    eval_stride: int | None = None
    pmon_command: str = DEFAULT_PMON_COMMAND
    query_command: str = DEFAULT_QUERY_COMMAND
    output: str = "human"

    def __post_init__(self):
        if self.output not in OUTPUT_MODES:
            raise ConfigError(f"output must be one of {OUTPUT_MODES}, got {self.output!r}")
        # WindowConfig carries the period/capacity/stride checks
        self.window

    @property
    def window(self) -> WindowConfig:
        return WindowConfig(self.window_capacity, self.period_s, self.eval_stride)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "thresholds" in data:
            if not isinstance(data["thresholds"], dict):
                raise ConfigError("thresholds must be a JSON object")
            data["thresholds"] = Thresholds.from_dict(data["thresholds"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, **changes) -> "Config":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return Config.from_dict(data)
