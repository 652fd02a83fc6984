"""TOML configuration: one section per stage, unknown keys rejected."""
from __future__ import annotations

import dataclasses
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .benchkit import VdsWeights
from .flow import BlockMatchConfig, WindowSearchConfig
from .memory import MemoryConfig
from .metrics import MetricConfig
from .pipeline import PipelineConfig
from .tmcc import CalibrationConfig

THREADS_ENV = "RSRVOS_THREADS"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VdsConfig:
    weights: VdsWeights = field(default_factory=VdsWeights)
    band: int = 3

    def __post_init__(self):
        if self.band < 1:
            raise ValueError("contrast band must be >= 1")


@dataclass(frozen=True)
class AppConfig:
    window: WindowSearchConfig = field(default_factory=WindowSearchConfig)
    block: BlockMatchConfig = field(default_factory=lambda: BlockMatchConfig(verify=3))
    tmcc: CalibrationConfig = field(default_factory=CalibrationConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    vds: VdsConfig = field(default_factory=VdsConfig)

    def pipeline_config(self) -> PipelineConfig:
        return dataclasses.replace(
            self.pipeline,
            calibration=dataclasses.replace(self.tmcc, window=self.window),
            memory=self.memory,
            block=self.block,
        )

    def calibration_config(self) -> CalibrationConfig:
        return dataclasses.replace(self.tmcc, window=self.window)


# TOML key -> (AppConfig attribute, dataclass field) per section
_SECTIONS = {
    "flow": {
        **{k: ("window", k) for k in ("n0", "delta_n", "n_max", "tau_motion", "accumulate")},
        **{k: ("block", k) for k in ("block", "search", "step", "verify")},
    },
    "tmcc": {k: ("tmcc", k) for k in ("tau_sem", "alpha", "beta", "lambda_assoc", "sigma_s", "sigma_floor", "morph_radius")},
    "memory": {
        k: ("memory", k)
        for k in ("window", "eta", "gate_percentile", "tau_amb", "tau_reg", "n_max", "omega", "rel_bias", "robust_weights", "innovation_region")
    },
    "pipeline": {
        k: ("pipeline", k) for k in ("resize", "feature", "feature_dim", "sim_threshold", "init_threshold", "texture_weight")
    },
    "metrics": {k: ("metrics", k) for k in ("tau_rec", "contour_dilation")},
    "vds": {**{k: ("vds.weights", k) for k in ("lambda_c", "lambda_d", "lambda_b")}, "band": ("vds", "band")},
}
_TUPLES = {"omega", "rel_bias", "robust_weights", "resize"}


def _coerce(key, value):
    if key in _TUPLES and isinstance(value, list):
        return tuple(value)
    if key == "resize" and value in ("native", "none"):
        return None
    return value


def from_dict(data: dict) -> AppConfig:
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    updates: dict[str, dict] = {}
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        keys = _SECTIONS[section]
        for key, value in body.items():
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            target, attr = keys[key]
            updates.setdefault(target, {})[attr] = _coerce(key, value)
    mem = updates.get("memory", {})
    if "window" in mem and "rel_bias" not in mem:
        mem["rel_bias"] = None  # re-derive zeros for the new window
    base = AppConfig()
    try:
        parts = {}
        for name in ("window", "block", "tmcc", "memory", "pipeline", "metrics"):
            parts[name] = dataclasses.replace(getattr(base, name), **updates.get(name, {}))
        weights = dataclasses.replace(base.vds.weights, **updates.get("vds.weights", {}))
        parts["vds"] = dataclasses.replace(base.vds, weights=weights, **updates.get("vds", {}))
        return AppConfig(**parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: Optional[str | Path] = None) -> AppConfig:
    if path is None:
        return AppConfig()
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)


def _toml_value(v) -> str:
    if v is None:
        return '"native"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialise {type(v).__name__}")


def dump_config(cfg: AppConfig) -> str:
    """Effective configuration as TOML (round-trips through ``load_config``)."""
    lines = []
    for section, keys in _SECTIONS.items():
        lines.append(f"[{section}]")
        for key, (target, attr) in keys.items():
            obj = cfg
            for part in target.split("."):
                obj = getattr(obj, part)
            value = getattr(obj, attr)
            lines.append(f"{key} = {_toml_value(value)}")
        lines.append("")
    return "\n".join(lines)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n
