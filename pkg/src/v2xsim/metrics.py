"""Beacon loss rate and delay bookkeeping.

A (beacon, intended receiver) pair is the unit of accounting. Intended receivers
are the other vehicles within ``nominal_range`` of the origin when the beacon is
generated. A pair is delivered by the first successful reception, direct or via an
RSU relay, and lost if still open when the origin's next beacon appears (or the
fixed lifetime passes).
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from v2xsim.scenario import ScenarioConfig

NS = 1_000_000_000
CDF_STEP = 1e-3

DIRECT = 1
RELAY = 2


@dataclass
class DeliveryRecord:
    origin: int
    msg: int
    gen_time: int
    intended: np.ndarray           # vehicle indices
    delivered_at: np.ndarray       # ns, -1 while open
    via: np.ndarray                # 0 open, DIRECT or RELAY
    deadline: Optional[int] = None

    @property
    def open_pairs(self) -> int:
        return int(np.count_nonzero(self.via == 0))


@dataclass
class PairOutcome:
    origin: int
    msg: int
    receiver: int
    gen_time: int
    outcome: str
    delay: float


class MetricsRecorder:
    """Collects per-pair outcomes during a run."""

    def __init__(self, config: ScenarioConfig, n_vehicles: int, keep_pairs: bool = False):
        self.config = config
        self.n_vehicles = n_vehicles
        self.range_sq = config.nominal_range**2
        self.fixed = config.beacon_lifetime_policy == "fixed"
        self.lifetime_ns = int(round(config.beacon_lifetime * NS))
        self.open: dict[tuple[int, int], DeliveryRecord] = {}
        self.current: dict[int, DeliveryRecord] = {}
        self.keep_pairs = keep_pairs
        self.pairs: list[PairOutcome] = []
        self.total_pairs = 0
        self.direct = 0
        self.relayed = 0
        self.lost = 0
        self.censored_pairs = 0
        self.empty_beacons = 0
        self.beacons = 0
        self._delays: list[np.ndarray] = []

    # -- recording ------------------------------------------------------------
    def record_generation(self, origin: int, msg: int, gen_time: int,
                          positions: np.ndarray) -> DeliveryRecord:
        """Open a record; ``positions`` holds vehicle coordinates (n_vehicles x 2)."""
        prev = self.current.get(origin)
        if prev is not None and not self.fixed:
            self._close(prev)
        d = positions[: self.n_vehicles] - positions[origin]
        dist_sq = np.einsum("ij,ij->i", d, d)
        mask = dist_sq <= self.range_sq
        mask[origin] = False
        intended = np.flatnonzero(mask)
        rec = DeliveryRecord(origin, msg, gen_time, intended,
                             np.full(len(intended), -1, dtype=np.int64),
                             np.zeros(len(intended), dtype=np.int8))
        if self.fixed:
            rec.deadline = gen_time + self.lifetime_ns
        self.beacons += 1
        if len(intended) == 0:
            self.empty_beacons += 1
        self.current[origin] = rec
        self.open[(origin, msg)] = rec
        return rec

    def record_delivery(self, key: tuple[int, int], receivers: np.ndarray, now: int,
                        via: int) -> int:
        """Mark pairs delivered. ``receivers`` is a boolean mask over all nodes.

        Returns the number of newly delivered pairs. Deliveries for closed records
        are ignored; only the first delivery of a pair counts.
        """
        rec = self.open.get(key)
        if rec is None or len(rec.intended) == 0:
            return 0
        if rec.deadline is not None and now > rec.deadline:
            return 0
        fresh = receivers[rec.intended] & (rec.via == 0)
        n = int(np.count_nonzero(fresh))
        if n:
            rec.delivered_at[fresh] = now
            rec.via[fresh] = via
        return n

    def expire(self, now: int) -> None:
        """Close fixed-lifetime records whose deadline has passed."""
        if not self.fixed:
            return
        for key in [k for k, r in self.open.items() if r.deadline is not None and r.deadline < now]:
            self._close(self.open[key])

    def _close(self, rec: DeliveryRecord) -> None:
        self.open.pop((rec.origin, rec.msg), None)
        if self.current.get(rec.origin) is rec:
            del self.current[rec.origin]
        self._account(rec)

    def _account(self, rec: DeliveryRecord) -> None:
        n = len(rec.intended)
        if n == 0:
            return
        delivered = rec.via != 0
        self.total_pairs += n
        self.direct += int(np.count_nonzero(rec.via == DIRECT))
        self.relayed += int(np.count_nonzero(rec.via == RELAY))
        self.lost += n - int(np.count_nonzero(delivered))
        delays = (rec.delivered_at[delivered] - rec.gen_time) / NS
        self._delays.append(delays)
        if self.keep_pairs:
            for i, r in enumerate(rec.intended):
                outcome = {0: "lost", DIRECT: "direct", RELAY: "relay"}[int(rec.via[i])]
                delay = (rec.delivered_at[i] - rec.gen_time) / NS if rec.via[i] else math.nan
                self.pairs.append(PairOutcome(rec.origin, rec.msg, int(r), rec.gen_time, outcome, delay))

    def close_all(self, now: int) -> None:
        """End of run. Records whose loss horizon reaches past the end are censored."""
        for rec in list(self.open.values()):
            horizon_passed = rec.deadline is not None and rec.deadline < now
            if horizon_passed:
                self._account(rec)
            else:
                self.censored_pairs += len(rec.intended)
        self.open.clear()
        self.current.clear()

    @property
    def delays(self) -> np.ndarray:
        if not self._delays:
            return np.zeros(0)
        return np.concatenate(self._delays)


def delay_cdf(samples: np.ndarray, step: float = CDF_STEP, t_max: float | None = None) -> list[tuple[float, float]]:
    """Empirical CDF of delay samples on a regular grid starting at 0."""
    samples = np.sort(np.asarray(samples, dtype=float))
    top = max(t_max or 0.0, float(samples[-1]) if len(samples) else 0.0, 0.5)
    k = int(math.ceil(top / step - 1e-9))
    grid = np.arange(k + 1) * step
    if len(samples) == 0:
        return [(float(t), 0.0) for t in grid]
    f = np.searchsorted(samples, grid + 1e-12, side="right") / len(samples)
    return [(float(t), float(v)) for t, v in zip(grid, f)]


def cdf_at(cdf: list[tuple[float, float]], t: float) -> float:
    """Step-function lookup: F at the largest grid point <= t."""
    best = 0.0
    for ti, fi in cdf:
        if ti <= t + 1e-12:
            best = fi
        else:
            break
    return best


@dataclass
class RunMetrics:
    seed: int
    config: ScenarioConfig
    blr: float
    total_pairs: int
    delivered_direct: int
    delivered_relay: int
    lost: int
    censored_pairs: int
    beacons: int
    delay_samples: np.ndarray = field(repr=False)
    cdf: list = field(repr=False)
    mean_delay: float = math.nan
    counters: dict = field(default_factory=dict)
    rsu_stats: dict = field(default_factory=dict)
    adaptation_trace: list = field(default_factory=list, repr=False)
    pairs: list = field(default_factory=list, repr=False)

    @property
    def delivered(self) -> int:
        return self.delivered_direct + self.delivered_relay

    def summary(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "config_hash": self.config.digest(),
            "area_radius": self.config.area_radius,
            "n_vehicles": self.config.n_vehicles,
            "blr": self.blr,
            "mean_delay": self.mean_delay,
            "total_pairs": self.total_pairs,
            "delivered_direct": self.delivered_direct,
            "delivered_relay": self.delivered_relay,
            "lost": self.lost,
            "censored_pairs": self.censored_pairs,
            "beacons": self.beacons,
            "delay_samples": int(len(self.delay_samples)),
            "cdf_at_0.35s": cdf_at(self.cdf, 0.35),
            "counters": self.counters,
            "rsu": self.rsu_stats,
        }

    def summary_text(self) -> str:
        """Run summary as JSON with floats rounded to 9 significant digits."""
        body = {"config": {k: _jsonable(v) for k, v in _config_items(self.config)},
                **self.summary()}
        return json.dumps(_round(body), indent=2, sort_keys=True) + "\n"


def _config_items(config: ScenarioConfig):
    for f in dataclasses.fields(config):
        yield f.name, getattr(config, f.name)


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _round(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return str(obj)
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _round(float(obj))
    return obj


def finalize(recorder: MetricsRecorder, now: int, seed: int,
             counters: dict | None = None, rsu_stats: dict | None = None,
             adaptation_trace: list | None = None) -> RunMetrics:
    recorder.close_all(now)
    delays = recorder.delays
    blr = recorder.lost / recorder.total_pairs if recorder.total_pairs else 0.0
    mean = float(delays.mean()) if len(delays) else math.nan
    return RunMetrics(
        seed=seed,
        config=recorder.config,
        blr=blr,
        total_pairs=recorder.total_pairs,
        delivered_direct=recorder.direct,
        delivered_relay=recorder.relayed,
        lost=recorder.lost,
        censored_pairs=recorder.censored_pairs,
        beacons=recorder.beacons,
        delay_samples=delays,
        cdf=delay_cdf(delays),
        mean_delay=mean,
        counters=counters or {},
        rsu_stats=rsu_stats or {},
        adaptation_trace=adaptation_trace or [],
        pairs=recorder.pairs,
    )
