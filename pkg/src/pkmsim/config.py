"""Scenario configuration: defaults, JSON loading, validation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .protocol import ProtocolId


class ScenarioError(ValueError):
    pass


ATTACK_NAMES = (
    "WaterTorture", "DoS", "MessageReplay", "IdentityTheft",
    "Impersonation", "Interleaving", "SuppressReplay",
)
PROTOCOL_NAMES = tuple(p.value for p in ProtocolId)


@dataclass(frozen=True)
class ScenarioConfig:
    protocols: tuple[str, ...] = PROTOCOL_NAMES
    attacks: tuple[str, ...] = ATTACK_NAMES
    seed: int = 1
    trials: int = 1
    # network
    latency: float = 1.0
    request_gap: float = 0.5
    clock_offsets: dict = field(default_factory=dict)
    clock_drifts: dict = field(default_factory=dict)
    isnap_resync_interval: Optional[float] = 60.0
    resync_residual: float = 0.0
    # freshness
    window: float = 10.0
    timestamp_width: int = 4
    retention_days: int = 15
    # base station budget
    budget_max_cycles: Optional[int] = 4
    cycle_time: float = 1.0
    cycle_timeout: float = 60.0
    overload: str = "drop"
    # adversary
    flood_volume: int = 100
    flood_interval: float = 0.5
    legit_joins: int = 20
    join_interval: float = 2.0
    adversary_delay: float = 30.0
    skew: float = 30.0
    replay_after: float = 20.0
    interleave_hold: float = 15.0
    water_torture_threshold: float = 0.5
    dos_threshold: float = 0.5
    # analytical model
    messages_per_day: int = 100
    fleet: int = 64
    sigma: float = 1e9
    flops_per_compare: int = 2
    literal_lambda: Optional[float] = None
    out_dir: str = "out"

    def protocol_ids(self) -> list[ProtocolId]:
        return [ProtocolId(p) for p in self.protocols]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["protocols"] = list(self.protocols)
        d["attacks"] = list(self.attacks)
        return d


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("scenario.schema.json").read_text())


def from_dict(data: dict[str, Any], base: Optional[ScenarioConfig] = None) -> ScenarioConfig:
    """Validate ``data`` against the schema and overlay it on ``base``."""
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ScenarioError(f"invalid scenario at {where}: {e.message}") from None
    data = dict(data)
    if data.get("attacks") == "matrix":
        data["attacks"] = list(ATTACK_NAMES)
    for key in ("protocols", "attacks"):
        if key in data:
            data[key] = tuple(data[key])
    cfg = replace(base or ScenarioConfig(), **data)
    validate(cfg)
    return cfg


def load(path: Optional[str | Path], overrides: Optional[dict[str, Any]] = None) -> ScenarioConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ScenarioError(f"cannot read config {path}: {e.strerror}") from None
        except json.JSONDecodeError as e:
            raise ScenarioError(f"config {path} is not valid JSON: {e}") from None
        if not isinstance(data, dict):
            raise ScenarioError(f"config {path} must hold a JSON object")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return from_dict(data)


def validate(cfg: ScenarioConfig) -> None:
    """Cross-field checks the schema cannot express."""
    for name in ("clock_offsets", "clock_drifts"):
        for node, value in getattr(cfg, name).items():
            if not isinstance(value, (int, float)):
                raise ScenarioError(f"{name}[{node}] must be a number")
    if any(v <= -1 for v in cfg.clock_drifts.values()):
        raise ScenarioError("clock drift must be > -1")
    if cfg.adversary_delay < cfg.latency:
        raise ScenarioError("adversary_delay must be at least the link latency")
    if not set(cfg.protocols) <= set(PROTOCOL_NAMES):
        raise ScenarioError(f"unknown protocol in {cfg.protocols}")
    if not set(cfg.attacks) <= set(ATTACK_NAMES):
        raise ScenarioError(f"unknown attack in {cfg.attacks}")
