"""Scenario configuration: flat YAML mapping with list-valued axes."""
from __future__ import annotations

import hashlib
import itertools
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

ENV_PREFIX = "REDSIM_"

INCA_POLICIES = ("all", "cachedbit", "cachedbit-nolast", "nbsc")
RE_POLICIES = ("smartre-lp", "smartre-greedy", "endre")
ALL_POLICIES = INCA_POLICIES + RE_POLICIES + ("none",)

# requests per client-server path in one SmartRE profiling window; chosen by
# redundancy.calibrate_window on the bundled Sprint map (alpha 0.9, 10^4
# chunks) to reproduce Sprint's ideal SmartRE reduction of 28.79%
SMARTRE_WINDOW_PER_PATH = 1057.0


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    topology: list = field(default_factory=lambda: ["sprint"])
    level: str = "pop"
    servers: Any = "auto"
    policy: list = field(default_factory=lambda: ["all", "cachedbit", "nbsc"])
    cache_chunks: list = field(default_factory=lambda: [128, 256, 512, 1024])
    alpha: list = field(default_factory=lambda: [0.9])
    pattern: list = field(default_factory=lambda: ["constant"])
    catalog_chunks: int = 10_000
    chunk_size: int = 1024
    n_requests: int = 125_000
    warmup: float = 0.2
    seeds: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    nbsc_radius: int = 1
    nbsc_exchange_period: int = 1000
    nbsc_consult: str = "every"
    bloom_bits_per_chunk: int = 16
    bloom_hashes: int = 4
    shim_bytes: int = 32
    external_hops: int = 1
    smartre_window: Any = "auto"
    smartre_window_per_path: float = SMARTRE_WINDOW_PER_PATH
    smartre_reference_chunks: int = 1024

    AXES = ("topology", "policy", "cache_chunks", "alpha", "pattern")

    def validate(self) -> "ScenarioConfig":
        for axis in self.AXES + ("seeds",):
            value = getattr(self, axis)
            if not isinstance(value, list):
                setattr(self, axis, [value])
            if not getattr(self, axis):
                raise ConfigError(f"{axis} must not be empty")
        if self.level not in ("pop", "router"):
            raise ConfigError(f"level must be 'pop' or 'router', not {self.level!r}")
        bad = [p for p in self.policy if p not in ALL_POLICIES]
        if bad:
            raise ConfigError(f"unknown policies {bad}; expected some of {ALL_POLICIES}")
        bad = [p for p in self.pattern if p not in ("constant", "gravity")]
        if bad:
            raise ConfigError(f"unknown traffic patterns {bad}")
        if any(not isinstance(c, int) or c < 0 for c in self.cache_chunks):
            raise ConfigError("cache_chunks must be non-negative integers")
        if any(a < 0 for a in self.alpha):
            raise ConfigError("alpha must be >= 0")
        if self.catalog_chunks < 1 or self.chunk_size < 1 or self.n_requests < 1:
            raise ConfigError("catalog_chunks, chunk_size and n_requests must be positive")
        if not 0.0 <= self.warmup < 1.0:
            raise ConfigError("warmup must be in [0, 1)")
        if int(self.n_requests * (1 - self.warmup)) < 1:
            raise ConfigError("no requests left after warmup")
        if self.servers != "auto" and (not isinstance(self.servers, int) or self.servers < 1):
            raise ConfigError("servers must be 'auto' or a positive integer")
        if self.nbsc_radius < 1 or self.nbsc_exchange_period < 1:
            raise ConfigError("nbsc_radius and nbsc_exchange_period must be >= 1")
        if self.nbsc_consult not in ("every", "first"):
            raise ConfigError("nbsc_consult must be 'every' or 'first'")
        if self.bloom_bits_per_chunk < 1 or self.bloom_hashes < 1:
            raise ConfigError("bloom parameters must be >= 1")
        if not 0 <= self.shim_bytes <= self.chunk_size:
            raise ConfigError("shim_bytes must be within [0, chunk_size]")
        if self.smartre_window != "auto" and (not isinstance(self.smartre_window, int)
                                              or self.smartre_window < 1):
            raise ConfigError("smartre_window must be 'auto' or a positive integer")
        if self.smartre_reference_chunks < 1:
            raise ConfigError("smartre_reference_chunks must be >= 1")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def scenarios(self):
        """Cartesian product of the axes in a fixed order."""
        for combo in itertools.product(*(getattr(self, a) for a in self.AXES)):
            yield dict(zip(self.AXES, combo))


def load_config(path: str | Path | None = None, overrides: dict | None = None,
                environ: dict | None = None) -> ScenarioConfig:
    """Read a YAML config, then apply ``REDSIM_*`` environment variables and
    explicit overrides, in that order."""
    data: dict = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat key/value mapping")
        data.update(loaded)
    known = {f.name for f in fields(ScenarioConfig)}
    env = os.environ if environ is None else environ
    for key, raw in env.items():
        if key.startswith(ENV_PREFIX):
            name = key[len(ENV_PREFIX):].lower()
            if name in known:
                data[name] = yaml.safe_load(raw)
    data.update(overrides or {})
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return ScenarioConfig(**data).validate()
