"""Myopic best-response adaptation for vehicle beacon rate and RSU transmit power.

Both selectors sweep their discrete strategy set in ascending order and keep the
first strict maximiser, so ties go to the lowest rate or power.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from v2xsim.scenario import ScenarioConfig


def vehicle_utility(rate: float, n_est: float, config: ScenarioConfig) -> float:
    """Freshness benefit minus density-weighted congestion cost."""
    density = n_est / config.n_scale if config.n_scale > 0 else 0.0
    return config.w_freshness * rate - config.w_congestion * rate * density**1.5


def rsu_utility(power_dbm: float, q_len: int, config: ScenarioConfig) -> float:
    p = 10.0 ** ((power_dbm - config.rsu_power_default_ref) / 10.0)
    return config.w_queue * q_len * p - config.w_power * p * p


def _argmax_ascending(options: Iterable[float], utility) -> float:
    best, best_u = None, float("-inf")
    for opt in sorted(options):
        u = utility(opt)
        if u > best_u:
            best, best_u = opt, u
    if best is None:
        raise ValueError("empty strategy set")
    return best


def best_rate(n_est: float, config: ScenarioConfig, rate_set: Iterable[float] | None = None) -> float:
    rates = config.beacon_rate_set if rate_set is None else rate_set
    return _argmax_ascending(rates, lambda r: vehicle_utility(r, n_est, config))


def best_power(q_len: int, config: ScenarioConfig, level_set: Iterable[float] | None = None) -> float:
    levels = config.rsu_power_levels if level_set is None else level_set
    return _argmax_ascending(levels, lambda p: rsu_utility(p, q_len, config))


@dataclass
class RateStrategy:
    rate_set: tuple[float, ...]
    current_interval: float
    last_update: float = 0.0

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "RateStrategy":
        return cls(tuple(config.beacon_rate_set), config.beacon_interval_default)


@dataclass
class PowerStrategy:
    level_set: tuple[float, ...]
    current_power: float
    last_update: float = 0.0

    @classmethod
    def from_config(cls, config: ScenarioConfig) -> "PowerStrategy":
        return cls(tuple(config.rsu_power_levels), config.rsu_power_init)


def select_beacon_rate(strategy: RateStrategy, n_est: float, config: ScenarioConfig,
                       now: float | None = None) -> float:
    """Best-response beacon interval; updates ``strategy`` in place and returns it."""
    rate = best_rate(n_est, config, strategy.rate_set)
    strategy.current_interval = 1.0 / rate
    if now is not None:
        strategy.last_update = now
    return strategy.current_interval


def select_rsu_power(strategy: PowerStrategy, q_len: int, config: ScenarioConfig,
                     now: float | None = None) -> float:
    strategy.current_power = best_power(q_len, config, strategy.level_set)
    if now is not None:
        strategy.last_update = now
    return strategy.current_power
