"""Experiment configuration: flat ``key=value`` text or JSON, validated up front."""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

INITS = ("e1", "gaussian", "random", "field")
METHODS = ("quotient", "critical")
COMMANDS = (
    "constants",
    "field",
    "spectrum",
    "energy",
    "bubble-scan",
    "solve",
    "linking",
    "nonexist",
    "bench-riesz",
)


@dataclass
class ExperimentConfig:
    command: str = "constants"
    dim: int = 3
    mu: float = 1.0
    lam: float = 0.0
    lam_grid: list = field(default_factory=list)
    shape: str = "full_box"
    n: int = 33
    L: float = 1.0
    delta: float | None = None
    eps_grid: list = field(default_factory=list)
    tol: float = 1e-6
    max_iters: int = 500
    starts: int = 32
    k: int = 10
    j: int = 1
    init: str = "e1"
    method: str = "quotient"
    action: str = "dump"
    sizes: list = field(default_factory=lambda: [8.0, 16.0, 32.0])
    repeats: int = 5
    plots: bool = False
    echo: str = ""
    field_path: str = ""
    csv_path: str = ""
    out_dir: str = "."
    seed: int = 0
    threads: int = 1

    # -- serialization ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                text = ",".join(repr(float(x)) for x in v)
            elif v is None:
                text = ""
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            lines.append(f"{f.name}={text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        values = {}
        for num, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"line {num}: expected key=value, got {raw!r}")
            values[key.strip()] = val.strip()
        return cls.from_mapping(values, text_values=True)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON config: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("JSON config must be an object")
        return cls.from_mapping(data)

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        text = Path(path).read_text()
        return cls.from_json(text) if text.lstrip().startswith("{") else cls.from_text(text)

    @classmethod
    def from_mapping(cls, data: dict, text_values: bool = False) -> ExperimentConfig:
        hints = typing.get_type_hints(cls)
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, val in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, hints[key], val, text_values)
        return cls(**kwargs)

    # -- validation ------------------------------------------------------

    def validate(self) -> ExperimentConfig:
        from .field import parse_shape
        from .errors import DomainError

        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.dim < 3:
            raise ConfigError("dim must be >= 3")
        if not 0.0 < self.mu < self.dim:
            raise ConfigError(f"mu must lie in (0, {self.dim})")
        if self.n < 8:
            raise ConfigError("n must be >= 8")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        try:
            parse_shape(self.shape)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("delta must be positive")
        if any(not e > 0 for e in self.eps_grid):
            raise ConfigError("eps grid entries must be positive")
        if self.command == "bubble-scan" and not self.eps_grid:
            raise ConfigError("bubble-scan needs a nonempty eps grid")
        if not self.tol > 0 or self.max_iters < 1 or self.starts < 1 or self.threads < 1:
            raise ConfigError("tol, max_iters, starts and threads must be positive")
        if not 1 <= self.k <= 64:
            raise ConfigError("k must lie in [1, 64]")
        if self.j < 1:
            raise ConfigError("j must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")
        if self.init == "field" and not self.field_path:
            raise ConfigError("init=field needs field_path")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}")
        if self.action not in ("dump", "load"):
            raise ConfigError("field action must be dump or load")
        if self.command == "field" and self.action == "load" and not self.field_path:
            raise ConfigError("field load needs a path")
        if self.command == "energy" and not self.field_path:
            raise ConfigError("energy needs --field")
        if self.echo not in ("", "json", "csv"):
            raise ConfigError("echo must be json, csv or empty")
        if self.repeats < 1 or any(s < 2 or not float(s).is_integer() for s in self.sizes):
            raise ConfigError("repeats must be positive and sizes integers >= 2")
        if self.command == "bench-riesz" and not self.sizes:
            raise ConfigError("bench-riesz needs at least one size")
        return self


def _coerce(key: str, hint, val, text_values: bool):
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)
    try:
        if hint is list or origin is list:
            if isinstance(val, str):
                return [float(x) for x in val.split(",") if x.strip()]
            return [float(x) for x in val]
        if type(None) in args:
            if val is None or (text_values and val == ""):
                return None
            inner = next(a for a in args if a is not type(None))
            return _coerce(key, inner, val, text_values)
        if hint is bool:
            if isinstance(val, str):
                low = val.strip().lower()
                if low in ("1", "true", "yes"):
                    return True
                if low in ("0", "false", "no", ""):
                    return False
                raise ValueError(val)
            return bool(val)
        if hint is int:
            if isinstance(val, bool) or (isinstance(val, float) and not val.is_integer()):
                raise ValueError(val)
            return int(val)
        if hint is float:
            return float(val)
        return str(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {val!r}") from exc
