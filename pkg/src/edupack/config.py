"""Pipeline configuration: strict JSON with per-module defaults.

A config file is one JSON object; any key the schema does not define is
an error, at every level. A typo like ``"seq_length"`` fails loudly
instead of silently running with defaults. Flags given on the command
line override config values, and an empty object is a complete, valid
config.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .analysis import DtypeBytes, TrainRunSpec
from .errors import ConfigError
from .filtering import FilterConfig
from .pack import PackConfig
from .shard import CODEC_NAMES, ShardWriteConfig, StreamConfig


@dataclass(frozen=True)
class CurveSpec:
    path: str
    label: str


@dataclass(frozen=True)
class AnalysisInputs:
    table: str | None = None
    curves: tuple[CurveSpec, ...] = ()
    runs: tuple[TrainRunSpec, ...] = ()


@dataclass(frozen=True)
class PipelineConfig:
    input: str | None = None
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    filter: FilterConfig = field(default_factory=FilterConfig)
    pack: PackConfig = field(default_factory=PackConfig)
    shard: ShardWriteConfig = field(default_factory=ShardWriteConfig)
    stream: StreamConfig = field(default_factory=StreamConfig)
    analysis: AnalysisInputs = field(default_factory=AnalysisInputs)

    def validate(self) -> None:
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")
        self.filter.validate()
        self.pack.validate()
        self.shard.validate()
        self.stream.validate()


def _check_keys(data: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _build(cls: type, data: Mapping[str, Any], where: str) -> Any:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(data, names, where)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"bad value in {where}: {exc}") from exc


def _build_shard(data: Mapping[str, Any]) -> ShardWriteConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("shard section must be a JSON object")
    data = dict(data)
    codec = data.get("codec")
    if isinstance(codec, str):
        if codec not in CODEC_NAMES:
            raise ConfigError(f"unknown codec {codec!r}; use one of {sorted(CODEC_NAMES)}")
        data["codec"] = CODEC_NAMES[codec]
    return _build(ShardWriteConfig, data, "shard")


def _build_run(data: Mapping[str, Any], where: str) -> TrainRunSpec:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a JSON object")
    data = dict(data)
    dtype = data.get("dtype_bytes")
    if isinstance(dtype, Mapping):
        data["dtype_bytes"] = _build(DtypeBytes, dtype, f"{where}.dtype_bytes")
    run = _build(TrainRunSpec, data, where)
    run.validate()
    return run


def _build_analysis(data: Mapping[str, Any]) -> AnalysisInputs:
    if not isinstance(data, Mapping):
        raise ConfigError("analysis section must be a JSON object")
    _check_keys(data, {"table", "curves", "runs"}, "analysis")
    curves = tuple(
        _build(CurveSpec, c, f"analysis.curves[{i}]")
        for i, c in enumerate(data.get("curves", []))
    )
    runs = tuple(
        _build_run(r, f"analysis.runs[{i}]") for i, r in enumerate(data.get("runs", []))
    )
    table = data.get("table")
    if table is not None and not isinstance(table, str):
        raise ConfigError("analysis.table must be a path string")
    return AnalysisInputs(table=table, curves=curves, runs=runs)


_TOP_KEYS = {"input", "output_dir", "seed", "workers", "filter", "pack", "shard", "stream", "analysis"}


def config_from_dict(obj: Mapping[str, Any]) -> PipelineConfig:
    if not isinstance(obj, Mapping):
        raise ConfigError("config must be a JSON object")
    _check_keys(obj, _TOP_KEYS, "config")
    seed = obj.get("seed", 0)
    stream_section = dict(obj.get("stream", {}))
    if "seed" not in stream_section:
        stream_section["seed"] = seed

    cfg = PipelineConfig(
        input=obj.get("input"),
        output_dir=obj.get("output_dir", "out"),
        seed=seed,
        workers=obj.get("workers", 1),
        filter=_build(FilterConfig, obj.get("filter", {}), "filter"),
        pack=_build(PackConfig, obj.get("pack", {}), "pack"),
        shard=_build_shard(obj.get("shard", {})),
        stream=_build(StreamConfig, stream_section, "stream"),
        analysis=_build_analysis(obj.get("analysis", {})),
    )
    if cfg.input is not None and not isinstance(cfg.input, str):
        raise ConfigError("input must be a path string")
    if not isinstance(cfg.output_dir, str):
        raise ConfigError("output_dir must be a path string")
    if not isinstance(cfg.seed, int) or isinstance(cfg.seed, bool):
        raise ConfigError("seed must be an integer")
    if not isinstance(cfg.workers, int) or isinstance(cfg.workers, bool):
        raise ConfigError("workers must be an integer")
    cfg.validate()
    return cfg


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a config file; ``None`` yields the all-defaults config."""
    if path is None:
        return config_from_dict({})
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc.msg} (line {exc.lineno})") from exc
    return config_from_dict(obj)


def load_runs(path: str | Path) -> list[TrainRunSpec]:
    """Parse a JSON list of training-run specs with strict keys."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ConfigError(f"{path}: expected a JSON list of runs")
    return [_build_run(r, f"runs[{i}]") for i, r in enumerate(data)]
