"""Density/radius sweeps over several seeds and the CSV / run-summary writers."""

from __future__ import annotations

import csv
import json
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from v2xsim import __version__
from v2xsim.engine import Simulation, Traces
from v2xsim.metrics import RunMetrics, cdf_at, delay_cdf
from v2xsim.scenario import ScenarioConfig

log = logging.getLogger(__name__)


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


@dataclass
class RunOutcome:
    radius: float
    n_vehicles: int
    seed: int
    metrics: Optional[RunMetrics] = None
    error: Optional[str] = None
    mobility_rows: list = field(default_factory=list)
    mac_rows: list = field(default_factory=list)


@dataclass
class CellStats:
    radius: float
    n_vehicles: int
    runs: int
    failed: int
    blr_mean: float
    blr_std: float
    delay_mean: float
    delay_std: float
    cdf_035: float
    delays: np.ndarray = field(repr=False)

    @property
    def ok(self) -> bool:
        return self.failed == 0


@dataclass
class SweepResult:
    base: ScenarioConfig
    outcomes: list[RunOutcome]
    cells: list[CellStats]

    @property
    def failed(self) -> list[RunOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def cell(self, radius: float, n_vehicles: int) -> CellStats:
        for c in self.cells:
            if c.radius == radius and c.n_vehicles == n_vehicles:
                return c
        raise KeyError((radius, n_vehicles))


def _run_one(args) -> RunOutcome:
    config, seed, trace_mobility, trace_mac, keep_pairs = args
    out = RunOutcome(config.area_radius, config.n_vehicles, seed)
    try:
        traces = Traces(mobility=trace_mobility, mac=trace_mac)
        out.metrics = Simulation(config, seed, traces=traces, keep_pairs=keep_pairs).run()
        out.mobility_rows = traces.mobility_rows
        out.mac_rows = traces.mac_rows
    except Exception:  # one bad cell must not abort the sweep
        out.error = traceback.format_exc(limit=5)
        log.error("run radius=%s n=%s seed=%s failed:\n%s",
                  config.area_radius, config.n_vehicles, seed, out.error)
    return out


def aggregate(outcomes: list[RunOutcome]) -> list[CellStats]:
    groups: dict[tuple[float, int], list[RunOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.radius, o.n_vehicles), []).append(o)
    cells = []
    for (radius, n), runs in sorted(groups.items()):
        good = [r.metrics for r in runs if r.metrics is not None]
        blrs = np.array([m.blr for m in good])
        means = np.array([m.mean_delay for m in good if not math.isnan(m.mean_delay)])
        delays = np.concatenate([m.delay_samples for m in good]) if good else np.zeros(0)
        cells.append(CellStats(
            radius=radius, n_vehicles=n, runs=len(runs), failed=len(runs) - len(good),
            blr_mean=float(blrs.mean()) if len(blrs) else math.nan,
            blr_std=float(blrs.std()) if len(blrs) else math.nan,
            delay_mean=float(means.mean()) if len(means) else math.nan,
            delay_std=float(means.std()) if len(means) else math.nan,
            cdf_035=cdf_at(delay_cdf(delays), 0.35),
            delays=delays,
        ))
    return cells


def sweep(base: ScenarioConfig, vehicle_counts: Iterable[int], radii: Iterable[float],
          seeds: Iterable[int], jobs: int = 1, trace_mobility: bool = False,
          trace_mac: bool = False, keep_pairs: bool = False) -> SweepResult:
    counts, radii, seeds = list(vehicle_counts), list(radii), list(seeds)
    if not counts or not radii or not seeds:
        raise ValueError("vehicle counts, radii and seeds must be nonempty")
    tasks = []
    for radius in radii:
        for n in counts:
            cfg = base.replace(area_radius=float(radius), n_vehicles=int(n))
            for seed in seeds:
                tasks.append((cfg, int(seed), trace_mobility, trace_mac, keep_pairs))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, tasks))
    else:
        outcomes = [_run_one(t) for t in tasks]
    return SweepResult(base, outcomes, aggregate(outcomes))


# -- output files -------------------------------------------------------------

def _header(config: ScenarioConfig) -> list[str]:
    lines = [f"# v2xsim {__version__}", f"# config_hash = {config.digest()}"]
    lines += [f"# {line}" for line in config.to_text().splitlines()]
    return lines


def _write_csv(path: Path, config: ScenarioConfig, columns: list[str], rows: Iterable) -> None:
    with path.open("w", newline="") as fh:
        for line in _header(config):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> list[dict[str, str]]:
    """Read a CSV written by this module, skipping the provenance header."""
    with path.open() as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _tag(radius: float, n: int) -> str:
    return f"{fmt(float(radius))}_{n}"


def write_outputs(result: SweepResult, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = result.base
    written = []

    ok = [o for o in result.outcomes if o.metrics is not None]
    path = out_dir / "blr_summary.csv"
    _write_csv(path, base, ["radius", "n_vehicles", "seed", "blr", "mean_delay"],
               ((o.radius, o.n_vehicles, o.seed, o.metrics.blr, o.metrics.mean_delay) for o in ok))
    written.append(path)

    path = out_dir / "sweep_table.csv"
    _write_csv(path, base,
               ["radius", "n_vehicles", "runs", "failed", "blr_mean", "blr_std",
                "mean_delay_mean", "mean_delay_std", "cdf_at_0.35s"],
               ((c.radius, c.n_vehicles, c.runs, c.failed, c.blr_mean, c.blr_std,
                 c.delay_mean, c.delay_std, c.cdf_035) for c in result.cells))
    written.append(path)

    for c in result.cells:
        cfg = base.replace(area_radius=float(c.radius), n_vehicles=c.n_vehicles)
        path = out_dir / f"delay_cdf_{_tag(c.radius, c.n_vehicles)}.csv"
        _write_csv(path, cfg, ["t", "F"], delay_cdf(c.delays))
        written.append(path)

    path = out_dir / "adaptation_trace.csv"
    rows = []
    for o in ok:
        for t, node, kind, x, value in o.metrics.adaptation_trace:
            rows.append((o.radius, o.n_vehicles, o.seed, t, node, kind, x, value))
    _write_csv(path, base, ["radius", "n_vehicles", "seed", "time", "node", "kind", "input", "value"], rows)
    written.append(path)

    for o in result.outcomes:
        stem = f"{_tag(o.radius, o.n_vehicles)}_{o.seed}"
        path = out_dir / f"run_summary_{stem}.json"
        if o.metrics is not None:
            path.write_text(o.metrics.summary_text())
        else:
            path.write_text('{"error": %s}\n' % _json_str(o.error))
        written.append(path)
        cfg = base.replace(area_radius=float(o.radius), n_vehicles=o.n_vehicles)
        if o.mobility_rows:
            path = out_dir / f"mobility_trace_{stem}.csv"
            _write_csv(path, cfg, ["time", "vehicle_id", "x", "y"], o.mobility_rows)
            written.append(path)
        if o.mac_rows:
            path = out_dir / f"mac_trace_{stem}.csv"
            _write_csv(path, cfg, ["time", "node", "event", "cw", "backoff"], o.mac_rows)
            written.append(path)
        if o.metrics is not None and o.metrics.pairs:
            path = out_dir / f"pairs_{stem}.csv"
            _write_csv(path, cfg, ["origin", "msg", "receiver", "gen_time", "outcome", "delay"],
                       ((p.origin, p.msg, p.receiver, p.gen_time / 1e9, p.outcome, p.delay)
                        for p in o.metrics.pairs))
            written.append(path)
    return written


def _json_str(s: Optional[str]) -> str:
    return json.dumps(s or "")
