"""Scenario parameters: defaults, validation and the flat ``key = value`` file format.

Every knob of a run lives in :class:`ScenarioConfig`. The defaults reproduce the
published parameter table; the fields after ``rsu_adapt``/``w_power`` fill gaps the
model leaves open and are meant to be probed in sensitivity experiments.
"""

from __future__ import annotations

import ast
import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, get_type_hints

LIFETIME_POLICIES = ("next-beacon", "fixed")


class ConfigError(ValueError):
    """Raised for unparsable documents or configs that violate an invariant."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message)
        self.field_name = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    # general
    sim_time: float = 60.0
    area_radius: float = 250.0
    n_vehicles: int = 20
    n_rsu: int = 4

    # PHY
    veh_tx_power: float = 20.0
    rsu_power_levels: tuple[float, ...] = (18.0, 21.0, 23.0, 25.0, 27.0)
    rsu_power_init: float = 23.0
    rsu_power_default_ref: float = 23.0
    beacon_interval_default: float = 0.1
    beacon_rate_set: tuple[float, ...] = (2.0, 5.0, 10.0)
    bandwidth: float = 1.08e6
    data_rate: float = 6e6
    beacon_size: int = 300
    phy_overhead: float = 20e-6
    noise_density: float = -174.0
    noise_figure: float = 5.0

    # channel
    pl_ref: float = 47.85
    n_los: float = 1.9
    n_nlos: float = 2.5
    shadow_los: float = 2.0
    shadow_nlos: float = 4.0
    snr_th: float = 3.3
    sir_th: float = 5.0

    # MAC
    slot_time: float = 10e-6
    cw_min_base: int = 15
    cw_max: int = 1023
    retx_max: int = 3
    k_n1: float = 2.5
    k_n2: float = 3.0
    n_est_window: float = 1.0

    # mobility
    grid_spacing: float = 60.0
    speed_min: float = 5.0
    speed_max: float = 25.0
    p_straight: float = 0.70

    # vehicle beacon-rate game
    veh_adapt_interval: float = 1.0
    w_freshness: float = 1.0
    w_congestion: float = 0.2
    n_scale: float = 15.0

    # RSU power game
    rsu_adapt_interval: float = 0.5
    w_queue: float = 1.0
    w_power: float = 0.5

    # gap-filling parameters
    cs_threshold: float = -85.0
    difs: float = 50e-6
    implicit_ack_wait: float = 0.02
    nominal_range: float = 200.0
    rsu_queue_cap: int = 100
    los_decay: float = 100.0
    beacon_lifetime_policy: str = "next-beacon"
    beacon_lifetime: float = 0.5
    mobility_tick: float = 0.01
    interference: bool = True
    rng_seed: int = 1

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return dump_config(self)

    def digest(self) -> str:
        """Short sha256 of the serialized config, used to tag output files."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
_TYPES = get_type_hints(ScenarioConfig)


def validate(config: ScenarioConfig) -> list[str]:
    """Return one message per violated invariant; empty when the config is usable."""
    problems: list[str] = []

    def bad(name: str, rule: str) -> None:
        problems.append(f"{name}: {rule}")

    for name, tp in _TYPES.items():
        value = getattr(config, name)
        if tp is float and not math.isfinite(value):
            bad(name, "must be finite")
    for name in ("rsu_power_levels", "beacon_rate_set"):
        if any(not math.isfinite(v) for v in getattr(config, name)):
            bad(name, "all entries must be finite")

    if config.speed_min > config.speed_max:
        bad("speed_min/speed_max", "speed_min must not exceed speed_max")
    if config.speed_min < 0:
        bad("speed_min", "must be >= 0")
    if not 0.0 <= config.p_straight <= 1.0:
        bad("p_straight", "must lie in [0, 1]")
    if config.cw_min_base > config.cw_max:
        bad("cw_min_base", "cw_min_base must not exceed cw_max")
    if config.cw_min_base < 0:
        bad("cw_min_base", "must be >= 0")
    if not config.beacon_rate_set:
        bad("beacon_rate_set", "strategy set must be nonempty")
    elif any(r <= 0 for r in config.beacon_rate_set):
        bad("beacon_rate_set", "rates must be strictly positive")
    if not config.rsu_power_levels:
        bad("rsu_power_levels", "strategy set must be nonempty")
    elif list(config.rsu_power_levels) != sorted(config.rsu_power_levels):
        bad("rsu_power_levels", "levels must be sorted ascending")
    if config.area_radius <= config.grid_spacing:
        bad("area_radius", "must exceed grid_spacing")
    if config.grid_spacing <= 0:
        bad("grid_spacing", "must be > 0")
    if config.n_vehicles < 0:
        bad("n_vehicles", "must be >= 0")
    if config.n_rsu < 0:
        bad("n_rsu", "must be >= 0")
    for name in ("sim_time", "bandwidth", "data_rate", "slot_time", "n_est_window",
                 "veh_adapt_interval", "rsu_adapt_interval", "mobility_tick",
                 "beacon_interval_default", "los_decay", "n_scale", "k_n1",
                 "beacon_lifetime"):
        if getattr(config, name) <= 0:
            bad(name, "must be > 0")
    for name in ("beacon_size", "phy_overhead", "difs", "implicit_ack_wait",
                 "nominal_range", "rsu_queue_cap", "retx_max", "shadow_los",
                 "shadow_nlos", "k_n2"):
        if getattr(config, name) < 0:
            bad(name, "must be >= 0")
    if config.beacon_lifetime_policy not in LIFETIME_POLICIES:
        bad("beacon_lifetime_policy", f"must be one of {LIFETIME_POLICIES}")
    return problems


def _coerce(name: str, raw: Any) -> Any:
    tp = _TYPES[name]
    try:
        if tp is bool:
            if isinstance(raw, str):
                low = raw.lower()
                if low in ("true", "yes", "on", "1"):
                    return True
                if low in ("false", "no", "off", "0"):
                    return False
                raise ValueError(raw)
            if isinstance(raw, (bool, int)):
                return bool(raw)
            raise ValueError(raw)
        if tp is int:
            if isinstance(raw, bool) or (isinstance(raw, float) and not raw.is_integer()):
                raise ValueError(raw)
            return int(raw)
        if tp is float:
            if isinstance(raw, bool):
                raise ValueError(raw)
            return float(raw)
        if tp is str:
            return str(raw)
        # tuple[float, ...]
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            raw = (raw,)
        if isinstance(raw, str):
            raw = tuple(x for x in raw.replace(",", " ").split())
        return tuple(float(x) for x in raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: cannot interpret {raw!r} as {tp}", name) from exc


def _parse_value(text: str) -> Any:
    if text == "":
        return ()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_document(text: str) -> dict[str, Any]:
    """Parse ``key = value`` lines into a raw mapping (values not yet coerced)."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", key)
        out[key] = _parse_value(value)
    return out


def config_from_mapping(mapping: dict[str, Any], base: ScenarioConfig | None = None) -> ScenarioConfig:
    unknown = sorted(set(mapping) - set(_FIELDS))
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}", unknown[0])
    values = {k: _coerce(k, v) for k, v in mapping.items()}
    config = dataclasses.replace(base or ScenarioConfig(), **values)
    problems = validate(config)
    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems), problems[0].split(":", 1)[0])
    return config


def load_config(source: str | Path | None = None) -> ScenarioConfig:
    """Build a config from document text or a path; absent keys keep their defaults."""
    if source is None:
        text = ""
    elif isinstance(source, Path):
        text = source.read_text()
    else:
        text = source
    return config_from_mapping(parse_document(text))


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "[" + ", ".join(repr(float(v)) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(config: ScenarioConfig) -> str:
    return "".join(f"{name} = {_format(getattr(config, name))}\n" for name in _FIELDS)
