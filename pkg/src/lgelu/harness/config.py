"""Typed run configuration and its flat key-value file format.

A config file is a list of ``key = value`` lines. Keys may be dotted
(``optimizer.lr_weights = 0.05``) or grouped under a ``[section]`` header.
Values are JSON literals: numbers, ``true``/``false``, ``null``, double-quoted
strings and ``[...]`` lists. ``#`` starts a comment. Unknown keys and values
of the wrong type are rejected.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
import typing
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from ..activation import ActivationKind
from ..metrics import MetricDirection
from ..optim import OptimizerConfig
from ..reparam import DEFAULT_TEMPERATURE, DEFAULT_UNIFORM_DELTA, InitMode


SYNTHETIC_EPOCHS = 40
IDX_EPOCHS = 20


class ConfigError(ValueError):
    pass


class DatasetKind(str, enum.Enum):
    MOONS = "moons"
    BLOBS = "blobs"
    IDX = "idx"


def _normalize(obj):
    """Coerce plain strings and dicts passed to a config constructor."""
    hints = typing.get_type_hints(type(obj))
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        tp = hints[f.name]
        wants_enum = isinstance(tp, type) and issubclass(tp, enum.Enum)
        if (wants_enum and not isinstance(v, tp)) or (dataclasses.is_dataclass(tp) and isinstance(v, dict)):
            setattr(obj, f.name, _coerce(tp, v, f.name))
        elif typing.get_origin(tp) is list and isinstance(v, list):
            (item,) = typing.get_args(tp)
            if isinstance(item, type) and issubclass(item, enum.Enum):
                setattr(obj, f.name, _coerce(tp, v, f.name))


@dataclass
class DatasetConfig:
    kind: DatasetKind = DatasetKind.MOONS
    n_samples: int = 600
    noise: float = 0.2  # moons only
    n_classes: int = 2  # blobs only
    n_features: int = 2  # blobs only
    cluster_std: float = 1.0  # blobs only
    images_path: str = ""  # idx only
    labels_path: str = ""  # idx only
    max_samples: int = 0  # idx only; 0 keeps every sample

    def __post_init__(self):
        _normalize(self)


@dataclass
class AnnealConfig:
    enabled: bool = False
    switch_fraction: float = 0.25
    epsilon: float = 5e-3
    # overrides epsilon when set
    lambda_target: Optional[float] = None

    def __post_init__(self):
        _normalize(self)


@dataclass
class TrainConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    layer_sizes: List[int] = field(default_factory=lambda: [2, 32, 32, 32, 32, 2])
    activation: ActivationKind = ActivationKind.LAMBDA_GELU
    t: float = DEFAULT_TEMPERATURE
    init_mode: InitMode = InitMode.UNIFORM
    uniform_delta: float = DEFAULT_UNIFORM_DELTA
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    # None resolves to 40 for synthetic data and 20 for IDX images
    epochs: Optional[int] = None
    batch_size: int = 8
    seeds: List[int] = field(default_factory=lambda: [0, 1, 2])
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    metric_direction: MetricDirection = MetricDirection.HIGHER_BETTER
    val_fraction: float = 1.0 / 3.0

    def __post_init__(self):
        _normalize(self)
        if self.epochs is None:
            self.epochs = IDX_EPOCHS if self.dataset.kind is DatasetKind.IDX else SYNTHETIC_EPOCHS
        self.validate()

    @property
    def c(self) -> float:
        return self.optimizer.multiplier_c

    def validate(self):
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise ConfigError("layer_sizes needs >= 2 positive widths")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError("val_fraction must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not self.t > 0:
            raise ConfigError("t must be > 0")
        if not 0.0 < self.uniform_delta < 1.0:
            raise ConfigError("uniform_delta must lie in (0, 1)")
        if self.anneal.enabled and self.activation is ActivationKind.LAMBDA_GELU:
            switch = math.floor(self.anneal.switch_fraction * self.epochs)
            if not 1 <= switch < self.epochs:
                raise ConfigError(f"annealing needs 1 <= floor(switch_fraction * epochs) < epochs, "
                                  f"got {switch} for epochs={self.epochs}")
            if self.anneal.lambda_target is None and not self.anneal.epsilon > 0:
                raise ConfigError("anneal.epsilon must be > 0")
            if self.anneal.lambda_target is not None and not self.anneal.lambda_target > 1:
                raise ConfigError("anneal.lambda_target must be > 1")

    def replace(self, **changes) -> "TrainConfig":
        return from_dict(TrainConfig, _merge(to_dict(self), changes))


@dataclass
class GridSpec:
    t_values: List[float] = field(default_factory=lambda: [0.1, 0.3, 0.6, 0.9])
    c_values: List[float] = field(default_factory=lambda: [1.0, 3.0, 6.0, 9.0])
    modes: List[InitMode] = field(default_factory=lambda: list(InitMode))
    base: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        _normalize(self)
        if not self.t_values or not self.c_values or not self.modes:
            raise ConfigError("grid axes must be non-empty")


def _merge(base: dict, changes: dict) -> dict:
    out = dict(base)
    for k, v in changes.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def to_dict(obj) -> Dict[str, Any]:
    """Plain JSON-compatible dict of a config dataclass (enums become strings)."""
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, enum.Enum):
            v = v.value
        elif isinstance(v, list):
            v = [x.value if isinstance(x, enum.Enum) else x for x in v]
        out[f.name] = v
    return out


def _coerce(tp, value, key):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, key)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        (item,) = typing.get_args(tp)
        return [_coerce(item, v, f"{key}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{key}: expected a section, got {value!r}")
        return from_dict(tp, value, prefix=f"{key}.")
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return tp(value)
        except ValueError:
            allowed = ", ".join(m.value for m in tp)
            raise ConfigError(f"{key}: {value!r} is not one of {allowed}") from None
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        return value
    raise TypeError(f"unsupported config type {tp}")


def from_dict(cls, data: Dict[str, Any], prefix: str = ""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError("unknown config key(s): " + ", ".join(prefix + k for k in unknown))
    kwargs = {k: _coerce(hints[k], v, prefix + k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or cls.__name__}: {exc}") from None


def parse_config_text(text: str) -> Dict[str, Any]:
    """Parse the flat key-value format into a nested dict."""
    out: Dict[str, Any] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]") and "=" not in line:
            section = line[1:-1].strip()
            if not section:
                raise ConfigError(f"line {lineno}: empty section name")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        try:
            parsed = json.loads(value.strip())
        except json.JSONDecodeError:
            raise ConfigError(f"line {lineno}: cannot parse value {value.strip()!r} "
                              "(strings must be double-quoted)") from None
        path = (section.split(".") if section else []) + key.split(".")
        node = out
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"line {lineno}: {part!r} is both a value and a section")
        if path[-1] in node:
            raise ConfigError(f"line {lineno}: duplicate key {'.'.join(path)!r}")
        node[path[-1]] = parsed
    return out


def _strip_comment(line: str) -> str:
    in_str = False
    escaped = False
    for i, ch in enumerate(line):
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            return line[:i]
    return line


def format_config(cfg: TrainConfig, grid: Optional[GridSpec] = None) -> str:
    """Render a config in the file format; parsing the result gives it back."""
    lines = []

    def emit(d, section):
        scalars = {k: v for k, v in d.items() if not isinstance(v, dict)}
        if section:
            lines.append(f"\n[{section}]")
        for k, v in scalars.items():
            lines.append(f"{k} = {json.dumps(v)}")
        for k, v in d.items():
            if isinstance(v, dict):
                emit(v, f"{section}.{k}" if section else k)

    emit(to_dict(cfg), "")
    if grid is not None:
        g = to_dict(grid)
        g.pop("base")
        emit(g, "grid")
    return "\n".join(lines).lstrip("\n") + "\n"


def split_raw(raw: Dict[str, Any]):
    """Build ``(TrainConfig, GridSpec or None)`` from a parsed config dict."""
    raw = dict(raw)
    grid_raw = raw.pop("grid", None)
    cfg = from_dict(TrainConfig, raw)
    grid = None
    if grid_raw is not None:
        if not isinstance(grid_raw, dict):
            raise ConfigError("grid must be a section")
        if "base" in grid_raw:
            raise ConfigError("unknown config key(s): grid.base")
        grid = from_dict(GridSpec, dict(grid_raw, base=to_dict(cfg)), prefix="grid.")
    return cfg, grid


def load_config(path):
    """Load ``(TrainConfig, GridSpec or None)`` from a config file.

    A run manifest (``.json``) written by the harness is accepted as well.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if str(path).endswith(".json"):
        try:
            manifest = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        raw = dict(manifest.get("config", {}))
        if manifest.get("grid") is not None:
            raw["grid"] = manifest["grid"]
        return split_raw(raw)
    return split_raw(parse_config_text(text))
