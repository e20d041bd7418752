"""Discrete-event core: event queue, node orchestration, on-air ledger and reception fan-out."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from v2xsim import gametheory, mobility, radio
from v2xsim.mac import NS, NEVER, Beacon, CsmaMac, NeighborTable, cw_adapt, to_ns
from v2xsim.metrics import DIRECT, RELAY, MetricsRecorder, RunMetrics, finalize
from v2xsim.relay import RsuState, complete_service, on_rsu_receive, service_queue
from v2xsim.rng import rng_for
from v2xsim.scenario import ConfigError, ScenarioConfig, validate

# event kinds; the numeric value only matters for readability of traces
BEACON_GEN = "beacon_gen"
TX_START = "tx_start"
TX_END = "tx_end"
MOBILITY_TICK = "mobility_tick"
VEH_ADAPT = "veh_adapt"
RSU_ADAPT = "rsu_adapt"
ACK_DEADLINE = "ack_deadline"
SIM_END = "sim_end"


class SchedulingError(RuntimeError):
    pass


@dataclass(order=True)
class Event:
    time: int
    sequence: int
    kind: str = field(compare=False)
    subject: int = field(compare=False, default=-1)
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Priority queue ordered by (time, sequence)."""

    def __init__(self) -> None:
        self._heap: list[tuple] = []
        self._seq = itertools.count()
        self.now = 0

    def __len__(self) -> int:
        return len(self._heap)

    def schedule(self, time: int, kind: str, subject: int = -1, payload: Any = None) -> Event:
        if time < self.now:
            raise SchedulingError(f"cannot schedule {kind} at {time} before now={self.now}")
        ev = Event(time, next(self._seq), kind, subject, payload)
        heapq.heappush(self._heap, (ev.time, ev.sequence, ev))
        return ev

    def peek_time(self) -> Optional[int]:
        return self._heap[0][0] if self._heap else None

    def next_event(self) -> Event:
        _, _, ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev


@dataclass
class Traces:
    mobility: bool = False
    mac: bool = False
    mobility_rows: list = field(default_factory=list)
    mac_rows: list = field(default_factory=list)


class Simulation:
    """One run of the scenario. Build, then call :meth:`run` once."""

    def __init__(self, config: ScenarioConfig, seed: int | None = None,
                 traces: Traces | None = None, keep_pairs: bool = False,
                 audit: bool = False):
        problems = validate(config)
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))
        self.config = config
        self.seed = config.rng_seed if seed is None else seed
        self.traces = traces or Traces()
        self.audit = audit
        self.audit_log: list[tuple] = []

        self.n_veh = config.n_vehicles
        self.n_rsu = config.n_rsu
        self.n = self.n_veh + self.n_rsu
        self.is_vehicle = np.zeros(self.n, dtype=bool)
        self.is_vehicle[: self.n_veh] = True

        self.tx_ns = to_ns(radio.tx_duration(config))
        self.tick_ns = to_ns(config.mobility_tick)
        self.end_ns = to_ns(config.sim_time)
        self.noise_dbm = radio.noise_floor(config)
        self.cs_mw = float(radio.dbm_to_mw(config.cs_threshold))

        self.queue = EventQueue()
        self.layout = mobility.GridLayout.from_config(config)

        seed = self.seed
        spawn_rngs = [rng_for(seed, "vehicle", i, "spawn") for i in range(self.n_veh)]
        self.vehicles = mobility.spawn_vehicles(config, spawn_rngs)
        self.turn_rngs = [rng_for(seed, "vehicle", i, "turn") for i in range(self.n_veh)]
        self.rsus = [RsuState.from_config(self.n_veh + j, p, config)
                     for j, p in enumerate(mobility.rsu_positions(config))]

        self.positions = np.zeros((self.n, 2))
        for i, v in enumerate(self.vehicles):
            self.positions[i] = v.position
        for r in self.rsus:
            self.positions[r.node] = r.position

        mac_trace = self._mac_trace if self.traces.mac else None
        self.macs: list[CsmaMac] = []
        self.channel_rngs = []
        self.phase_rngs = []
        for node in range(self.n):
            kind, idx = self._label(node)
            self.macs.append(CsmaMac(node, config, rng_for(seed, kind, idx, "backoff"), mac_trace))
            self.channel_rngs.append(rng_for(seed, kind, idx, "channel"))
            self.phase_rngs.append(rng_for(seed, kind, idx, "phase"))

        self.neighbors = NeighborTable(self.n, self.is_vehicle, to_ns(config.n_est_window))
        self.rate = [gametheory.RateStrategy.from_config(config) for _ in range(self.n_veh)]
        self.next_msg = [0] * self.n_veh

        self.busy = np.zeros(self.n, dtype=bool)
        self.idle_since = np.full(self.n, NEVER, dtype=np.int64)
        self.has_frame = np.zeros(self.n, dtype=bool)
        self.active: list[radio.TransmissionEvent] = []

        self.recorder = MetricsRecorder(config, self.n_veh, keep_pairs=keep_pairs)
        self.adaptation_trace: list[tuple] = []
        self.tx_per_beacon: dict[tuple[int, int], int] = {}
        self.counters = {
            "transmissions": 0, "original_tx": 0, "relay_tx": 0, "retransmissions": 0,
            "implicit_acks": 0, "ack_drops": 0, "superseded": 0, "receptions": 0,
            "snr_fail": 0, "sir_fail": 0, "half_duplex": 0, "cs_violations": 0,
            "max_tx_per_beacon": 0,
        }
        self._ran = False

    # -- small helpers -----------------------------------------------------
    def _label(self, node: int) -> tuple[str, int]:
        if node < self.n_veh:
            return "vehicle", node
        return "rsu", node - self.n_veh

    def _mac_trace(self, t: int, node: int, event: str, cw: int, backoff: Optional[int]) -> None:
        self.traces.mac_rows.append((t / NS, node, event, cw, "" if backoff is None else backoff))

    def n_est(self, node: int) -> int:
        return self.neighbors.n_est(node, self.queue.now)

    def _schedule_fire(self, node: int, at: Optional[int]) -> None:
        if at is not None:
            self.queue.schedule(at, TX_START, node, self.macs[node].state.token)

    def _sync(self, node: int) -> None:
        # MAC objects only get channel callbacks while they hold frames
        st = self.macs[node].state
        st.busy = bool(self.busy[node])
        st.idle_since = int(self.idle_since[node])

    def _enqueue(self, node: int, beacon: Beacon, force_backoff: bool = False) -> None:
        mac = self.macs[node]
        if not mac.has_frame and not mac.state.transmitting:
            self._sync(node)
        at = mac.enqueue(beacon, self.queue.now, force_backoff=force_backoff)
        self.has_frame[node] = True
        self._schedule_fire(node, at)

    def _update_carrier_sense(self, now: int) -> None:
        if self.active:
            sensed = self.active[0].rx_mw.copy()
            for tx in self.active[1:]:
                sensed += tx.rx_mw
            new_busy = sensed > self.cs_mw
        else:
            new_busy = np.zeros(self.n, dtype=bool)
        changed = new_busy != self.busy
        if not changed.any():
            return
        self.busy = new_busy
        self.idle_since[changed & ~new_busy] = now
        for node in np.flatnonzero(changed & self.has_frame):
            mac = self.macs[node]
            if new_busy[node]:
                mac.on_busy(now)
            else:
                self._schedule_fire(node, mac.on_idle(now))

    # -- event handlers ------------------------------------------------------
    def _on_mobility(self, now: int) -> None:
        dt = self.config.mobility_tick
        p = self.config.p_straight
        for i, v in enumerate(self.vehicles):
            nv = mobility.step(v, dt, self.layout, self.turn_rngs[i], p)
            self.vehicles[i] = nv
            self.positions[i, 0] = nv.x
            self.positions[i, 1] = nv.y
        if self.traces.mobility:
            t = now / NS
            self.traces.mobility_rows.extend((t, i, v.x, v.y) for i, v in enumerate(self.vehicles))
        self.recorder.expire(now)
        if now + self.tick_ns < self.end_ns:
            self.queue.schedule(now + self.tick_ns, MOBILITY_TICK)

    def _on_beacon_gen(self, v: int, now: int) -> None:
        msg = self.next_msg[v]
        self.next_msg[v] += 1
        beacon = Beacon(v, msg, now, self.config.beacon_size)
        self.recorder.record_generation(v, msg, now, self.positions)
        mac = self.macs[v]
        for key in [k for k in mac.state.awaiting_ack if k[1] < msg]:
            del mac.state.awaiting_ack[key]
        mac.state.cw_current = cw_adapt(self.n_est(v), self.config)
        # a stale original still waiting for the medium is dropped with its backoff;
        # the fresh beacon contends from the density-adapted window
        if mac.drop_pending():
            self.counters["superseded"] += 1
            self.has_frame[v] = False
        self._enqueue(v, beacon)
        interval = to_ns(self.rate[v].current_interval)
        nxt = now + interval
        if nxt < self.end_ns:
            self.queue.schedule(nxt, BEACON_GEN, v)

    def _on_tx_start(self, node: int, token: int, now: int) -> None:
        mac = self.macs[node]
        beacon = mac.fire(now, token)
        if beacon is None:
            return
        self.has_frame[node] = mac.has_frame
        if self.busy[node]:
            self.counters["cs_violations"] += 1
        if node < self.n_veh:
            power = self.config.veh_tx_power
        else:
            power = self.rsus[node - self.n_veh].power_strategy.current_power

        pos = self.positions[node].copy()
        d = np.hypot(self.positions[:, 0] - pos[0], self.positions[:, 1] - pos[1])
        _, _, pl = radio.sample_links(d, self.channel_rngs[node], self.config)
        rx_dbm = power - pl
        rx_mw = np.power(10.0, rx_dbm / 10.0)
        rx_mw[node] = 0.0
        tx = radio.TransmissionEvent(node, power, now, now + self.tx_ns, (pos[0], pos[1]), beacon,
                                     rx_mw, rx_dbm)
        for other in self.active:
            other.overlappers.append(tx)
            tx.overlappers.append(other)
        self.active.append(tx)

        self.counters["transmissions"] += 1
        if beacon.relay:
            self.counters["relay_tx"] += 1
        else:
            self.counters["original_tx"] += 1
            k = beacon.key
            c = self.tx_per_beacon.get(k, 0) + 1
            self.tx_per_beacon[k] = c
            if c > self.counters["max_tx_per_beacon"]:
                self.counters["max_tx_per_beacon"] = c
        if self.audit:
            self.audit_log.append(("start", now, node, id(tx)))
        self.queue.schedule(tx.end, TX_END, node, tx)
        self._update_carrier_sense(now)

    def _on_tx_end(self, node: int, tx: radio.TransmissionEvent, now: int) -> None:
        self.active.remove(tx)
        if self.audit:
            self.audit_log.append(("end", now, node, id(tx)))
        self._update_carrier_sense(now)

        if self.config.interference and tx.overlappers:
            interf = tx.overlappers[0].rx_mw.copy()
            for o in tx.overlappers[1:]:
                interf += o.rx_mw
            blocked = np.zeros(self.n, dtype=bool)
            blocked[[o.tx_id for o in tx.overlappers]] = True
        else:
            interf = 0.0
            blocked = None
        snr_ok, sir_ok = radio.decide(tx.rx_dbm, interf, self.config, self.noise_dbm)
        ok = snr_ok & sir_ok
        ok[node] = False
        c = self.counters
        snr_fail = ~snr_ok
        snr_fail[node] = False
        c["snr_fail"] += int(np.count_nonzero(snr_fail))
        c["sir_fail"] += int(np.count_nonzero(snr_ok & ~sir_ok))
        if blocked is not None:
            blocked[node] = False
            c["half_duplex"] += int(np.count_nonzero(ok & blocked))
            ok &= ~blocked
        c["receptions"] += int(np.count_nonzero(ok))

        beacon: Beacon = tx.beacon_ref
        if not beacon.relay:
            self.neighbors.record(ok, node, now)
            self.recorder.record_delivery(beacon.key, ok, now, DIRECT)
            for rsu in self.rsus:
                if ok[rsu.node] and on_rsu_receive(rsu, beacon, now):
                    self._service(rsu, now)
        else:
            self.recorder.record_delivery(beacon.key, ok, now, RELAY)
            origin = beacon.relayed_origin
            if ok[origin] and self.macs[origin].on_receive(beacon, now, self.n_est(origin)):
                c["implicit_acks"] += 1
                self.has_frame[origin] = self.macs[origin].has_frame

        # sender side
        mac = self.macs[node]
        self._sync_after_tx(node, now)
        self._schedule_fire(node, mac.tx_done(now))
        self.has_frame[node] = mac.has_frame
        if node < self.n_veh:
            if not beacon.relay and beacon.msg == self.next_msg[node] - 1:
                deadline = mac.start_ack_wait(beacon, now)
                self.queue.schedule(deadline, ACK_DEADLINE, node, beacon.key)
        else:
            rsu = self.rsus[node - self.n_veh]
            complete_service(rsu)
            self._service(rsu, now)

    def _sync_after_tx(self, node: int, now: int) -> None:
        if not self.busy[node]:
            self.idle_since[node] = max(int(self.idle_since[node]), now)
        self._sync(node)

    def _service(self, rsu: RsuState, now: int) -> None:
        mac = self.macs[rsu.node]
        if mac.has_frame or mac.state.transmitting:
            return
        relay = service_queue(rsu, now)
        if relay is not None:
            self._enqueue(rsu.node, relay)

    def _on_ack_deadline(self, node: int, key: tuple[int, int], now: int) -> None:
        mac = self.macs[node]
        wait = mac.state.awaiting_ack.get(key)
        if wait is None or wait.deadline != now:
            return
        if not mac.has_frame and not mac.state.transmitting:
            self._sync(node)
        action, at = mac.on_ack_timeout(key, now, self.n_est(node))
        if action == "retransmit":
            self.counters["retransmissions"] += 1
            self.has_frame[node] = True
            self._schedule_fire(node, at)
        elif action == "drop":
            self.counters["ack_drops"] += 1

    def _on_veh_adapt(self, v: int, now: int) -> None:
        n_est = self.n_est(v)
        interval = gametheory.select_beacon_rate(self.rate[v], n_est, self.config, now / NS)
        self.adaptation_trace.append((now / NS, v, "vehicle", n_est, 1.0 / interval))
        nxt = now + to_ns(self.config.veh_adapt_interval)
        if nxt < self.end_ns:
            self.queue.schedule(nxt, VEH_ADAPT, v)

    def _on_rsu_adapt(self, j: int, now: int) -> None:
        rsu = self.rsus[j]
        power = gametheory.select_rsu_power(rsu.power_strategy, rsu.q_len, self.config, now / NS)
        self.adaptation_trace.append((now / NS, rsu.node, "rsu", rsu.q_len, power))
        nxt = now + to_ns(self.config.rsu_adapt_interval)
        if nxt < self.end_ns:
            self.queue.schedule(nxt, RSU_ADAPT, j)

    # -- driver ---------------------------------------------------------------
    def _bootstrap(self) -> None:
        cfg = self.config
        q = self.queue
        if self.n_veh and self.tick_ns < self.end_ns:
            q.schedule(self.tick_ns, MOBILITY_TICK)
        beacon_ns = to_ns(cfg.beacon_interval_default)
        veh_ns = to_ns(cfg.veh_adapt_interval)
        rsu_ns = to_ns(cfg.rsu_adapt_interval)
        for v in range(self.n_veh):
            rng = self.phase_rngs[v]
            first = int(rng.integers(0, beacon_ns))
            adapt = int(rng.integers(1, veh_ns + 1))
            if first < self.end_ns:
                q.schedule(first, BEACON_GEN, v)
            if adapt < self.end_ns:
                q.schedule(adapt, VEH_ADAPT, v)
        for j, rsu in enumerate(self.rsus):
            adapt = int(self.phase_rngs[rsu.node].integers(1, rsu_ns + 1))
            if adapt < self.end_ns:
                q.schedule(adapt, RSU_ADAPT, j)
        q.schedule(self.end_ns, SIM_END)

    def run(self) -> RunMetrics:
        if self._ran:
            raise RuntimeError("a Simulation instance runs once")
        self._ran = True
        self._bootstrap()
        q = self.queue
        handlers: dict[str, Callable] = {
            MOBILITY_TICK: lambda ev: self._on_mobility(ev.time),
            BEACON_GEN: lambda ev: self._on_beacon_gen(ev.subject, ev.time),
            TX_START: lambda ev: self._on_tx_start(ev.subject, ev.payload, ev.time),
            TX_END: lambda ev: self._on_tx_end(ev.subject, ev.payload, ev.time),
            ACK_DEADLINE: lambda ev: self._on_ack_deadline(ev.subject, ev.payload, ev.time),
            VEH_ADAPT: lambda ev: self._on_veh_adapt(ev.subject, ev.time),
            RSU_ADAPT: lambda ev: self._on_rsu_adapt(ev.subject, ev.time),
        }
        while q:
            ev = q.next_event()
            if ev.kind == SIM_END:
                break
            handlers[ev.kind](ev)
        return self._finish()

    def _finish(self) -> RunMetrics:
        rsu_stats = {}
        for rsu in self.rsus:
            s = rsu.stats
            rsu_stats[str(rsu.node)] = {
                "position": list(rsu.position),
                "enqueued": s.enqueued,
                "forwarded": s.forwarded,
                "dropped": s.dropped,
                "stale_discarded": s.stale_discarded,
                "still_queued": rsu.q_len,
                "final_power": rsu.power_strategy.current_power,
            }
        return finalize(self.recorder, self.end_ns, self.seed, dict(self.counters),
                        rsu_stats, self.adaptation_trace)


def run(config: ScenarioConfig, seed: int | None = None, **kwargs) -> RunMetrics:
    """Run one simulation and return its metrics."""
    return Simulation(config, seed, **kwargs).run()
