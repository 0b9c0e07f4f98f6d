"""Application configuration: defaults, config file, flag overrides.

Precedence: built-in defaults < config file < command-line flags. The config
file is one JSON document (the same parser as the data files, single
document). Credentials never appear in configuration, only the names of
environment variables that hold them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError, ConflictingFlagsError, InvalidWeightsError
from .gateway import EndpointConfig
from .index import HybridWeights
from .pipeline import EXPANSION_CAP, GateConfig

ENDPOINT_ROLES = ("expansion", "rerank", "attribution", "embedder", "judge")

DEFAULT_EMBED_DIM = 64


@dataclass(frozen=True)
class AppConfig:
    mock: bool = False
    scenarios_path: str | None = None
    weights: HybridWeights = field(default_factory=HybridWeights)
    gate: GateConfig = field(default_factory=GateConfig)
    expansion_cap: int = EXPANSION_CAP
    embed_dim: int = DEFAULT_EMBED_DIM
    parallelism: int = 1
    language: str = "auto"
    stance_budget: int = 120
    log_level: str = "warning"
    endpoints: dict[str, EndpointConfig] = field(default_factory=dict)

    def echo(self) -> dict[str, Any]:
        """The effective settings as echoed into every report.

        Endpoint entries carry the credential environment variable NAME only;
        the credential value never leaves the environment.
        """
        return {
            "mock": self.mock,
            "w_bm25": self.weights.w_bm25,
            "w_dense": self.weights.w_dense,
            "tau_rel": self.gate.tau_rel,
            "k_final": self.gate.k_final,
            "k_candidates": self.gate.k_candidates,
            "expansion_cap": self.expansion_cap,
            "embed_dim": self.embed_dim,
            "parallelism": self.parallelism,
            "language": self.language,
            "endpoints": {
                role: {
                    "base_url": ep.base_url,
                    "model": ep.model,
                    "credential_env": ep.credential_env,
                }
                for role, ep in sorted(self.endpoints.items())
            },
        }


_SCALAR_KEYS = {
    "mock": bool,
    "scenarios_path": str,
    "w_bm25": float,
    "tau_rel": float,
    "k_final": int,
    "k_candidates": int,
    "expansion_cap": int,
    "embed_dim": int,
    "parallelism": int,
    "language": str,
    "stance_budget": int,
    "log_level": str,
}


def _read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"config file {path} must hold a single JSON object")
    return document


def _endpoint_from_mapping(role: str, raw: Any) -> EndpointConfig:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"endpoint {role!r} must be an object")
    known = {f.name for f in fields(EndpointConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"endpoint {role!r} has unknown fields: {', '.join(unknown)}")
    if "base_url" not in raw or "model" not in raw:
        raise ConfigError(f"endpoint {role!r} needs base_url and model")
    try:
        return EndpointConfig(**dict(raw))
    except TypeError as exc:
        raise ConfigError(f"endpoint {role!r}: {exc}") from exc


def load_config(
    path: str | Path | None = None, overrides: Mapping[str, Any] | None = None
) -> AppConfig:
    """Merge defaults, an optional config file, and flag overrides.

    overrides uses the same scalar keys as the file; None values mean "not
    given" and are skipped. --mock combined with an explicit remote endpoint
    override is a flag conflict.
    """
    merged: dict[str, Any] = {}
    endpoints: dict[str, EndpointConfig] = {}

    if path is not None:
        document = _read_config_file(path)
        raw_endpoints = document.pop("endpoints", {})
        if not isinstance(raw_endpoints, Mapping):
            raise ConfigError("config 'endpoints' must be an object")
        for role, raw in raw_endpoints.items():
            if role not in ENDPOINT_ROLES:
                raise ConfigError(
                    f"unknown endpoint role {role!r}; expected one of "
                    f"{', '.join(ENDPOINT_ROLES)}"
                )
            endpoints[role] = _endpoint_from_mapping(role, raw)
        unknown = sorted(set(document) - set(_SCALAR_KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged.update(document)

    overrides = dict(overrides or {})
    override_endpoint = overrides.pop("endpoint", None)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _SCALAR_KEYS:
            raise ConfigError(f"unknown override key: {key}")
        merged[key] = value

    if override_endpoint is not None:
        if merged.get("mock"):
            raise ConflictingFlagsError(
                "--mock conflicts with an explicit remote endpoint"
            )
        for role in ENDPOINT_ROLES:
            endpoints[role] = override_endpoint

    for key, caster in _SCALAR_KEYS.items():
        if key in merged:
            try:
                merged[key] = caster(merged[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from exc

    try:
        weights = HybridWeights.from_bm25_weight(merged.pop("w_bm25", 0.5))
    except InvalidWeightsError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        gate = GateConfig(
            tau_rel=merged.pop("tau_rel", GateConfig.tau_rel),
            k_final=merged.pop("k_final", GateConfig.k_final),
            k_candidates=merged.pop("k_candidates", GateConfig.k_candidates),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    config = AppConfig(weights=weights, gate=gate, endpoints=endpoints, **merged)
    if config.parallelism < 1:
        raise ConfigError(f"parallelism must be positive, got {config.parallelism}")
    if config.embed_dim < 1:
        raise ConfigError(f"embed_dim must be positive, got {config.embed_dim}")
    if config.language not in ("auto", "zh", "en"):
        raise ConfigError(f"language must be auto, zh, or en, got {config.language!r}")
    return config
