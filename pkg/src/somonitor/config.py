"""Configuration: dataclass settings per subsystem, loadable from a TOML file.

Sections and keys mirror the subsystem config names (gateway.backend,
cluster.k0, rank.alpha, ...); command-line flags override file values.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class GatewaySettings:
    backend: str = "offline"
    temperature: float = 0.1
    max_parallel: int = 4
    retry_limit: int = 3


@dataclass(frozen=True)
class ClusterSettings:
    k0: int = 3
    k_max: int = 50
    seed: int = 0
    max_iterations: int = 100
    outlier_percentile: float = 95.0


@dataclass(frozen=True)
class RankSettings:
    alpha: float = 1.0
    beta: float = 0.0
    classifier: str = "oracle"
    ensemble_runs: int = 5
    grounded: bool = False
    seed_base: int = 0


@dataclass(frozen=True)
class EvalSettings:
    relevance_size: int = 5
    cutoffs: tuple[int, ...] = (3, 5, 10)


@dataclass(frozen=True)
class ServiceSettings:
    host: str = "127.0.0.1"
    port: int = 8787
    cors_origins: tuple[str, ...] = ("*",)


@dataclass(frozen=True)
class AppConfig:
    store_root: str = "somonitor-store"
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    cluster: ClusterSettings = field(default_factory=ClusterSettings)
    rank: RankSettings = field(default_factory=RankSettings)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    service: ServiceSettings = field(default_factory=ServiceSettings)


def _section(cls, data: dict):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ValueError(f"unknown config key {key!r} for {cls.__name__}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path: Optional[str | Path] = None) -> AppConfig:
    if path is None:
        return AppConfig()
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return AppConfig(
        store_root=data.get("store", {}).get("root", AppConfig.store_root),
        gateway=_section(GatewaySettings, data.get("gateway", {})),
        cluster=_section(ClusterSettings, data.get("cluster", {})),
        rank=_section(RankSettings, data.get("rank", {})),
        evaluation=_section(EvalSettings, data.get("eval", {})),
        service=_section(ServiceSettings, data.get("service", {})),
    )


def override(settings, **updates):
    """Apply non-None keyword overrides to a settings dataclass."""
    actual = {k: v for k, v in updates.items() if v is not None}
    return replace(settings, **actual) if actual else settings
