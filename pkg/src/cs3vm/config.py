"""Run configuration: YAML loading, defaults, schedules and range checks."""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .evaluation import METHODS
from .models import PenaltyConfig
from .rcm import RcmConfig, default_k1
from .wircm import WircmConfig, default_b_max


class ConfigError(ValueError):
    pass


class RangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class RcmSettings:
    k1: int | None = None  # None: 10 / 20 / 50 by m
    k_plus: int = 50
    delta_hat_1: float = 0.8
    delta_tilde: float = 0.1
    kmeans_max_iter: int = 100


@dataclass(frozen=True)
class WircmSettings:
    B_max: int | None = None  # None: 0.2m / 0.25m / 0.35m / 0.45m by m
    gamma: float = 1.2
    T_max: float = 40.0


@dataclass(frozen=True)
class RunConfig:
    datasets: tuple[str, ...] = ()
    label_column: str = "target"
    positive_label: int = 1
    methods: tuple[str, ...] = ("svm", "cs3vm", "ircm", "wircm")
    samples: int = 5
    sampling: str = "biased"
    fraction: float = 0.1
    p_pos: float = 0.85
    seed: int = 0
    time_limit: float = 3600.0
    C1: float = 1.0
    C2: float = 1.0
    rcm: RcmSettings = RcmSettings()
    wircm: WircmSettings = WircmSettings()
    jobs: int = 1
    strict_ranges: bool = False

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; choose from {list(METHODS)}")
        if self.sampling not in ("biased", "srs"):
            raise ConfigError("sampling must be 'biased' or 'srs'")
        if self.samples < 1 or self.jobs < 1:
            raise ConfigError("samples and jobs must be at least 1")
        if not self.time_limit > 0:
            raise ConfigError("time_limit must be positive")
        if not (self.C1 > 0 and self.C2 > 0):
            raise ConfigError("C1 and C2 must be positive")

    @property
    def penalties(self) -> PenaltyConfig:
        return PenaltyConfig(self.C1, self.C2)

    def k1_for(self, m: int) -> int:
        return default_k1(m) if self.rcm.k1 is None else self.rcm.k1

    def b_max_for(self, m: int) -> int:
        return default_b_max(m) if self.wircm.B_max is None else self.wircm.B_max

    def rcm_config(self, m: int, seed: int) -> RcmConfig:
        r = self.rcm
        return RcmConfig(k1=min(self.k1_for(m), max(m, 1)), k_plus=r.k_plus, delta_hat_1=r.delta_hat_1,
                         delta_tilde=r.delta_tilde, penalties=self.penalties, time_limit=self.time_limit, seed=seed,
                         kmeans_max_iter=r.kmeans_max_iter)

    def wircm_config(self, m: int, seed: int) -> WircmConfig:
        w = self.wircm
        return WircmConfig(self.rcm_config(m, seed), self.b_max_for(m), w.gamma, w.T_max, self.time_limit)

    def range_issues(self, m: int) -> list[str]:
        """Departures from the plausible hyperparameter ranges for ``m`` unlabeled points."""
        issues = []
        k1, b_max = self.k1_for(m), self.b_max_for(m)
        r, w = self.rcm, self.wircm
        if not 0.5 * self.C1 <= self.C2 <= 2 * self.C1:
            issues.append(f"C2={self.C2} outside [0.5*C1, 2*C1]")
        if not 2 <= k1 <= m:
            issues.append(f"k1={k1} outside [2, m={m}]")
        if not k1 <= r.k_plus <= m:
            issues.append(f"k_plus={r.k_plus} outside [k1={k1}, m={m}]")
        if not 0.5 <= r.delta_hat_1 <= 0.9:
            issues.append(f"delta_hat_1={r.delta_hat_1} outside [0.5, 0.9]")
        if not 0.1 <= r.delta_tilde <= 1 - r.delta_hat_1 + 1e-12:
            issues.append(f"delta_tilde={r.delta_tilde} outside [0.1, 1 - delta_hat_1]")
        if not 1 <= b_max <= m:
            issues.append(f"B_max={b_max} outside [1, m={m}]")
        if b_max >= 1 and not 1.1 <= w.gamma <= m / b_max:
            issues.append(f"gamma={w.gamma} outside [1.1, m/B_max={m / b_max:.4g}]")
        if not 10 <= w.T_max <= 100:
            issues.append(f"T_max={w.T_max} outside [10, 100] s")
        return issues

    def check_ranges(self, m: int) -> list[str]:
        issues = self.range_issues(m)
        if issues and self.strict_ranges:
            raise ConfigError("; ".join(issues))
        for msg in issues:
            warnings.warn(msg, RangeWarning, stacklevel=2)
        return issues

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, data: dict[str, Any], where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    return cls(**data)


def config_from_dict(data: dict[str, Any] | None) -> RunConfig:
    data = dict(data or {})
    try:
        if "rcm" in data:
            data["rcm"] = _build(RcmSettings, dict(data["rcm"] or {}), "rcm")
        if "wircm" in data:
            data["wircm"] = _build(WircmSettings, dict(data["wircm"] or {}), "wircm")
        for key in ("datasets", "methods"):
            if key in data:
                value = data[key]
                data[key] = tuple([value] if isinstance(value, str) else value)
        return _build(RunConfig, data, "config")
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path | None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Read a YAML file (optional) and apply flag overrides on top."""
    data: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"no such config file: {p}")
        loaded = yaml.safe_load(p.read_text(encoding="utf-8"))
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        data.update(loaded or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return config_from_dict(data)


__all__ = ["ConfigError", "RangeWarning", "RcmSettings", "RunConfig", "WircmSettings", "config_from_dict",
           "load_config"]
