"""Versioned run configuration stored as JSON.

Every section is optional; absent keys take their defaults and unknown keys
are rejected. See README.md for the full schema.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .errors import KpiError
from .forecasting import PipelineConfig
from .hpo import SearchSpace
from .lstm import TrainingConfig
from .series import ScaleMethod

CONFIG_VERSION = 1


@dataclass(frozen=True)
class PipelineSection:
    scaling: str = "minmax"
    z_threshold: float = 3.0
    train_fraction: float = 0.8
    horizons: tuple[int, ...] = (3, 6, 12)
    retrain_every: Optional[int] = None


@dataclass(frozen=True)
class TrainingSection:
    lookback: int = 12
    hidden_size: int = 16
    epochs: int = 800
    learning_rate: float = 0.005
    patience: int = 50
    val_fraction: float = 0.1
    gradient_clip: float = 5.0
    warmup_epochs: int = 100


@dataclass(frozen=True)
class SyntheticSection:
    months: int = 85
    noise_sigma: Optional[float] = None


@dataclass(frozen=True)
class HpoSection:
    method: str = "grid"
    budget: int = 20
    lookback: tuple[int, ...] = (6, 12)
    hidden_size: tuple[int, ...] = (8, 16, 32)
    learning_rate: tuple[float, float] = (1e-3, 2e-2)
    lr_grid: Optional[tuple[float, ...]] = (1e-3, 5e-3, 2e-2)
    lr_points: int = 3
    epochs: tuple[int, ...] = (800,)


@dataclass(frozen=True)
class RunConfig:
    version: int = CONFIG_VERSION
    input: Optional[str] = None
    synth: bool = False
    out: str = "out"
    seed: int = 0
    workers: int = 1
    cities: Optional[tuple[str, ...]] = None
    pipeline: PipelineSection = field(default_factory=PipelineSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    synthetic: SyntheticSection = field(default_factory=SyntheticSection)
    hpo: HpoSection = field(default_factory=HpoSection)

    # -- conversions ---------------------------------------------------------

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(seed=self.seed, **asdict(self.training))

    def pipeline_config(self) -> PipelineConfig:
        p = self.pipeline
        return PipelineConfig(
            training=self.training_config(),
            scaling=ScaleMethod(p.scaling),
            z_threshold=p.z_threshold,
            train_fraction=p.train_fraction,
            horizons=p.horizons,
            retrain_every=p.retrain_every,
        )

    def search_space(self) -> SearchSpace:
        h = self.hpo
        return SearchSpace(h.lookback, h.hidden_size, h.learning_rate, h.epochs, h.lr_grid, h.lr_points)

    def with_best(self, params: dict) -> "RunConfig":
        return replace(self, training=replace(self.training, **params))

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


_SECTIONS = {
    "pipeline": PipelineSection,
    "training": TrainingSection,
    "synthetic": SyntheticSection,
    "hpo": HpoSection,
}


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise KpiError("CONFIG_ERROR", f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise KpiError("CONFIG_ERROR", f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _SECTIONS and cls is RunConfig:
            value = _build(_SECTIONS[key], value, key)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict) -> RunConfig:
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise KpiError("CONFIG_ERROR", f"unsupported config version {version}")
    cfg = _build(RunConfig, data, "config")
    try:
        # surface value errors now rather than mid-run
        cfg.pipeline_config()
        cfg.search_space()
    except (TypeError, ValueError) as e:
        raise KpiError("CONFIG_ERROR", str(e)) from e
    if cfg.hpo.method not in ("grid", "bayes"):
        raise KpiError("CONFIG_ERROR", f"hpo.method must be grid or bayes, got {cfg.hpo.method!r}")
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise KpiError("CONFIG_ERROR", f"{path}: {e}") from e
    return config_from_dict(data)
