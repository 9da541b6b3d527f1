"""YAML scenario configuration.

Durations accept unit suffixes (``ns``, ``us``, ``ms``, ``s``) and are stored
as integer nanoseconds.  Unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..core import MuPattern, parse_duration


class ConfigError(ValueError):
    pass


GRID_DEFAULTS: dict[str, Any] = {
    "topology": {"kind": "grid", "rows": 3, "cols": 4, "link_rate": 100_000_000,
                 "prop_delay": "0ns", "proc_delay": "0ns"},
    "streams": {"isochronous": 24, "periods": ["200us", "400us"],
                "latency_factors": [0.5, 0.75, 1.0], "size": 800, "pcp": [6],
                "sporadic": 0, "sporadic_min_inter_event": ["200us", "400us"],
                "sporadic_pcp": 7},
    "simulation": {"horizon": 10_000, "clock_skew": "0ns", "adversary": False},
    "study": {"sporadic_counts": [0, 8, 16, 24, 32], "instances": 100, "workers": 1,
              "time_budget": "60s"},
}

FIVEG_DEFAULTS: dict[str, Any] = {
    "topology": {"kind": "5g", "agvs": 4, "backbone_bridges": 3, "link_rate": 100_000_000,
                 "prop_delay": "0ns", "proc_delay": "0ns",
                 "uplink_histogram": "builtin:uplink", "downlink_histogram": "builtin:downlink",
                 "dmax_quantile": 0.99},
    "streams": {"wired": 4, "wired_period": "5ms", "wired_latency": "500us", "wired_pcp": 6,
                "wired_mu": "1", "wireless_period": "20ms", "wireless_latency": "20ms",
                "wireless_pcp": 5, "mu_pool": ["001", "010", "100"], "guaranteed_share": 0.5,
                "size": 800},
    "delays": {"stable_quantile": 0.9, "unstable_interval": "1s", "burst_len": 3,
               "unbounded_max": "30ms", "unbounded_stream": "auto"},
    "simulation": {"horizon": 10_000, "clock_skew": "0ns"},
    "study": {"workers": 1},
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise ConfigError(f"unknown config key {path}{k}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{k} must be a mapping")
            out[k] = _merge(base[k], v, f"{path}{k}.")
        else:
            out[k] = v
    return out


@dataclass
class ScenarioConfig:
    kind: str
    data: dict[str, Any]
    seed: int = 0
    source: Path | None = field(default=None, compare=False)

    def section(self, name: str) -> dict[str, Any]:
        return self.data[name]

    def dur(self, section: str, key: str) -> int:
        try:
            return parse_duration(self.data[section][key])
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None

    def durs(self, section: str, key: str) -> list[int]:
        try:
            return [parse_duration(v) for v in self.data[section][key]]
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{section}.{key}: {exc}") from None

    def with_overrides(self, **sections) -> ScenarioConfig:
        data = _merge(self.data, sections)
        return ScenarioConfig(self.kind, data, self.seed, self.source)

    @property
    def horizon(self) -> int:
        return int(self.data["simulation"]["horizon"])


def build_config(raw: dict | None = None, seed: int | None = None) -> ScenarioConfig:
    raw = dict(raw or {})
    kind = (raw.get("topology") or {}).get("kind", "grid")
    if kind == "grid":
        defaults = GRID_DEFAULTS
    elif kind == "5g":
        defaults = FIVEG_DEFAULTS
    else:
        raise ConfigError(f"unknown topology kind {kind!r}")
    file_seed = raw.pop("seed", 0)
    data = _merge(defaults, raw)
    cfg = ScenarioConfig(kind, data, int(seed if seed is not None else file_seed))
    validate(cfg)
    return cfg


def load_config(path: str | Path | None, seed: int | None = None) -> ScenarioConfig:
    if path is None:
        return build_config({}, seed)
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    cfg = build_config(raw, seed)
    cfg.source = path
    return cfg


def validate(cfg: ScenarioConfig) -> None:
    topo, st = cfg.section("topology"), cfg.section("streams")
    if int(topo["link_rate"]) <= 0:
        raise ConfigError("topology.link_rate must be positive")
    cfg.dur("topology", "prop_delay")
    cfg.dur("topology", "proc_delay")
    if cfg.kind == "grid":
        if int(topo["rows"]) < 1 or int(topo["cols"]) < 1 or int(topo["rows"]) * int(topo["cols"]) < 2:
            raise ConfigError("grid needs at least two bridges")
        if not cfg.durs("streams", "periods") or not st["latency_factors"]:
            raise ConfigError("streams.periods and streams.latency_factors must be non-empty")
        if any(not 0 < float(f) <= 1 for f in st["latency_factors"]):
            raise ConfigError("latency factors must lie in (0, 1]")
        if int(st["sporadic"]) > 0:
            cfg.durs("streams", "sporadic_min_inter_event")
    else:
        if int(topo["agvs"]) < 1 or int(topo["backbone_bridges"]) < 1:
            raise ConfigError("5g topology needs at least one AGV and one backbone bridge")
        for key in ("wired_period", "wired_latency", "wireless_period", "wireless_latency"):
            cfg.dur("streams", key)
        if not st["mu_pool"]:
            raise ConfigError("streams.mu_pool must not be empty")
        if not 0.0 <= float(st["guaranteed_share"]) <= 1.0:
            raise ConfigError("streams.guaranteed_share must lie in [0, 1]")
        for mu in st["mu_pool"] + [st["wired_mu"]]:
            if not isinstance(mu, str):
                raise ConfigError(f"mu-pattern {mu!r} must be a quoted string, e.g. \"001\"")
            try:
                MuPattern.parse(str(mu))
            except ValueError as exc:
                raise ConfigError(f"bad mu-pattern {mu!r}: {exc}") from None
        for key in ("unstable_interval", "unbounded_max"):
            cfg.dur("delays", key)
    if int(cfg.data["simulation"]["horizon"]) <= 0:
        raise ConfigError("simulation.horizon must be positive")
