"""CSMA/CA broadcast MAC with a density-scaled contention window and implicit ACKs.

Times inside the state machine are integer nanoseconds. Backoff is not ticked slot
by slot: when the medium goes idle the node computes the slot-aligned instant its
counter would reach zero, and when it goes busy the counter is reduced by the number
of whole idle slots that elapsed. The outcome is the same as ticking each slot.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from v2xsim.scenario import ScenarioConfig

NS = 1_000_000_000
NEVER = -(2**62)


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS))


def cw_adapt(n_est: float, config: ScenarioConfig) -> int:
    """Minimum contention window scaled by estimated neighbour count."""
    if n_est < 0:
        raise ValueError("n_est must be >= 0")
    grown = config.cw_min_base + math.floor(n_est / config.k_n1) * config.k_n2
    return int(min(config.cw_max, grown))


def double_cw(cw: int, cw_max: int) -> int:
    return min(cw_max, 2 * (cw + 1) - 1)


@dataclass(frozen=True)
class Beacon:
    origin: int
    msg: int
    gen_time: int
    size: int = 300
    relay: bool = False
    relayed_origin: Optional[int] = None
    relayed_msg: Optional[int] = None
    relayed_gen_time: Optional[int] = None

    @property
    def key(self) -> tuple[int, int]:
        """Identity of the original vehicle beacon this frame carries."""
        if self.relay:
            return (self.relayed_origin, self.relayed_msg)
        return (self.origin, self.msg)

    def as_relay(self, rsu: int, seq: int, now: int) -> "Beacon":
        if self.relay:
            raise ValueError("relays are never re-relayed")
        return Beacon(rsu, seq, now, self.size, True, self.origin, self.msg, self.gen_time)


class NeighborTable:
    """Last time each node decoded a beacon sent directly by each vehicle.

    ``n_est`` counts distinct vehicle senders heard in ``(now - window, now]``.
    Keeping only the last hear time per pair gives exactly that count.
    """

    def __init__(self, n_nodes: int, is_vehicle: np.ndarray, window: int | float):
        self.last_heard = np.full((n_nodes, n_nodes), NEVER, dtype=np.int64)
        self.is_vehicle = np.asarray(is_vehicle, dtype=bool)
        self.window = window

    def record(self, receivers, sender: int, now: int) -> None:
        if not self.is_vehicle[sender]:
            return
        self.last_heard[receivers, sender] = now

    def n_est(self, node: int, now: int) -> int:
        row = self.last_heard[node]
        return int(np.count_nonzero((row > now - self.window) & (row <= now) & self.is_vehicle))


@dataclass
class AckWait:
    beacon: Beacon
    retx_count: int = 0
    deadline: Optional[int] = None


@dataclass
class MacState:
    node: int
    cw_current: int
    backoff_counter: Optional[int] = None
    pending: deque = field(default_factory=deque)
    awaiting_ack: dict = field(default_factory=dict)
    transmitting: bool = False
    busy: bool = False
    idle_since: int = NEVER
    count_start: Optional[int] = None
    fire_at: Optional[int] = None
    token: int = 0


TraceFn = Callable[[int, int, str, int, Optional[int]], None]


class CsmaMac:
    """Per-node CSMA/CA state machine driven by engine callbacks.

    Methods that may start a countdown return the slot-aligned time at which the node
    wants to transmit (or None); the engine schedules a fire event carrying
    ``state.token`` and calls :meth:`fire` when it comes due.
    """

    def __init__(self, node: int, config: ScenarioConfig, rng: np.random.Generator,
                 trace: TraceFn | None = None):
        self.config = config
        self.slot = to_ns(config.slot_time)
        self.difs = to_ns(config.difs)
        self.rng = rng
        self.trace = trace
        self.state = MacState(node=node, cw_current=config.cw_min_base)

    # -- helpers -----------------------------------------------------------
    def _align(self, t: int) -> int:
        return -(-t // self.slot) * self.slot

    def _draw(self) -> int:
        return int(self.rng.integers(0, self.state.cw_current + 1))

    def _log(self, now: int, event: str) -> None:
        if self.trace is not None:
            s = self.state
            self.trace(now, s.node, event, s.cw_current, s.backoff_counter)

    def _cancel(self) -> None:
        s = self.state
        s.fire_at = None
        s.count_start = None
        s.token += 1

    def _plan(self, now: int) -> Optional[int]:
        """Schedule the countdown for the current idle period."""
        s = self.state
        if s.transmitting or s.busy or not s.pending:
            return None
        start = max(self._align(s.idle_since + self.difs), self._align(now))
        if s.backoff_counter is None:
            s.count_start = start
            s.fire_at = start
        else:
            s.count_start = start
            s.fire_at = start + s.backoff_counter * self.slot
        s.token += 1
        return s.fire_at

    # -- engine-facing API ---------------------------------------------------
    @property
    def has_frame(self) -> bool:
        return bool(self.state.pending)

    def enqueue(self, beacon: Beacon, now: int, force_backoff: bool = False) -> Optional[int]:
        s = self.state
        s.pending.append(beacon)
        if s.transmitting or s.fire_at is not None:
            return None
        if len(s.pending) > 1:
            return None
        # a frame that finds the medium idle for at least DIFS goes out on the next
        # slot; one arriving during a busy period or its DIFS tail backs off first
        recently_busy = now - s.idle_since < self.difs
        if s.backoff_counter is None and (force_backoff or s.busy or recently_busy):
            s.backoff_counter = self._draw()
            self._log(now, "backoff")
        return self._plan(now)

    def replace_pending(self, beacon: Beacon, predicate: Callable[[Beacon], bool]) -> bool:
        """Swap a queued frame matching ``predicate`` for ``beacon``; contention state carries over."""
        s = self.state
        for i, old in enumerate(s.pending):
            if predicate(old):
                s.pending[i] = beacon
                return True
        return False

    def on_busy(self, now: int) -> None:
        s = self.state
        if s.busy:
            return
        s.busy = True
        if s.fire_at is None:
            return
        if s.backoff_counter is None:
            s.backoff_counter = self._draw()
        else:
            done = max(0, (now - s.count_start) // self.slot)
            s.backoff_counter = max(0, s.backoff_counter - int(done))
        self._cancel()
        self._log(now, "freeze")

    def on_idle(self, now: int) -> Optional[int]:
        s = self.state
        if not s.busy:
            return None
        s.busy = False
        s.idle_since = now
        if s.pending and s.backoff_counter is None and not s.transmitting:
            s.backoff_counter = self._draw()
        return self._plan(now)

    def on_channel_state(self, busy: bool, now: int) -> Optional[int]:
        if busy:
            self.on_busy(now)
            return None
        return self.on_idle(now)

    def fire(self, now: int, token: int) -> Optional[Beacon]:
        s = self.state
        if token != s.token or s.fire_at != now or s.busy or s.transmitting or not s.pending:
            return None
        beacon = s.pending.popleft()
        s.transmitting = True
        s.backoff_counter = None
        s.fire_at = None
        s.count_start = None
        s.token += 1
        self._log(now, "tx")
        return beacon

    def tx_done(self, now: int) -> Optional[int]:
        s = self.state
        s.transmitting = False
        if not s.busy:
            s.idle_since = max(s.idle_since, now)
        if s.pending:
            s.backoff_counter = self._draw()
            return self._plan(now)
        return None

    def drop_pending(self) -> int:
        s = self.state
        n = len(s.pending)
        s.pending.clear()
        self._idle_out()
        return n

    def _idle_out(self) -> None:
        if self.state.fire_at is not None:
            self._cancel()
        self.state.backoff_counter = None

    # -- implicit acknowledgements -------------------------------------------
    def start_ack_wait(self, beacon: Beacon, now: int) -> int:
        s = self.state
        wait = s.awaiting_ack.get(beacon.key)
        if wait is None:
            wait = s.awaiting_ack[beacon.key] = AckWait(beacon)
        wait.deadline = now + to_ns(self.config.implicit_ack_wait)
        return wait.deadline

    def on_receive(self, beacon: Beacon, now: int, n_est: int) -> bool:
        """Handle a decoded frame; returns True when it is an implicit ACK for us."""
        s = self.state
        if not beacon.relay or beacon.relayed_origin != s.node:
            return False
        wait = s.awaiting_ack.pop(beacon.key, None)
        if wait is None:
            return False
        s.pending = deque(b for b in s.pending if b.key != beacon.key)
        if not s.pending:
            self._idle_out()
        s.cw_current = cw_adapt(n_est, self.config)
        self._log(now, "ack")
        return True

    def on_ack_timeout(self, key: tuple[int, int], now: int, n_est: int) -> tuple[str, Optional[int]]:
        """Retransmit with a doubled window, or give up after ``retx_max`` retries.

        Returns (action, fire time) where action is 'retransmit', 'drop' or 'none'.
        """
        s = self.state
        wait = s.awaiting_ack.get(key)
        if wait is None or wait.deadline is None or wait.deadline > now:
            return ("none", None)
        if wait.retx_count < self.config.retx_max:
            wait.retx_count += 1
            wait.deadline = None
            s.cw_current = double_cw(s.cw_current, self.config.cw_max)
            self._log(now, "retx")
            return ("retransmit", self.enqueue(wait.beacon, now, force_backoff=True))
        del s.awaiting_ack[key]
        s.cw_current = cw_adapt(n_est, self.config)
        self._log(now, "drop")
        return ("drop", None)
