"""Experiment configuration: strict JSON with a canonical serialisation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

OPERATIONS = ("validate", "riccati", "lyapunov", "orbits", "pressure", "spectrum", "coding", "suite")
CONFIG_KEYS = ("model", "operation", "params", "seed", "out", "tolerances")


def fmt(x) -> str:
    """Round-trip-safe decimal with 17 significant digits."""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if x is None:
        return ""
    return format(float(x), ".17g")


def _normalise(obj):
    """Floats rendered to 17 significant digits so JSON output is stable across runs."""
    if isinstance(obj, dict):
        return {str(k): _normalise(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalise(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        obj = obj.item()
    if isinstance(obj, float):
        if obj != obj or obj in (float("inf"), float("-inf")):
            return str(obj)
        return float(format(obj, ".17g"))
    return obj


def dumps(obj) -> str:
    return json.dumps(_normalise(obj), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class ExperimentConfig:
    model: str | None = None
    operation: str = "validate"
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "out"
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.operation not in OPERATIONS:
            raise ConfigError(f"unknown operation {self.operation!r}; expected one of {list(OPERATIONS)}")
        if not isinstance(self.params, dict) or not isinstance(self.tolerances, dict):
            raise ConfigError("params and tolerances must be objects")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(d) - set(CONFIG_KEYS))
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        return cls.from_json(p.read_text())

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in CONFIG_KEYS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def replace(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(d)
