"""RSU store-and-forward: dedupe decoded vehicle beacons, queue them, and hand the
queue head to the RSU's MAC one frame at a time. Times are integer nanoseconds."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from v2xsim.gametheory import PowerStrategy
from v2xsim.mac import Beacon, to_ns
from v2xsim.scenario import ScenarioConfig


@dataclass
class RsuStats:
    enqueued: int = 0
    forwarded: int = 0
    dropped: int = 0
    stale_discarded: int = 0


@dataclass
class RsuState:
    node: int
    position: tuple[float, float]
    power_strategy: PowerStrategy
    queue_cap: int = 100
    stale_age: int = 100_000_000  # ns
    queue: deque = field(default_factory=deque)
    seen: set = field(default_factory=set)
    in_service: Optional[Beacon] = None
    seq: int = 0
    stats: RsuStats = field(default_factory=RsuStats)

    @classmethod
    def from_config(cls, node: int, position: tuple[float, float], config: ScenarioConfig) -> "RsuState":
        return cls(node, position, PowerStrategy.from_config(config),
                   queue_cap=config.rsu_queue_cap, stale_age=to_ns(config.beacon_interval_default))

    @property
    def q_len(self) -> int:
        """Occupancy including the frame currently held by the MAC."""
        return len(self.queue)


def on_rsu_receive(rsu: RsuState, beacon: Beacon, now: int) -> bool:
    """Queue a relay copy of a fresh original beacon. Returns True if enqueued."""
    if beacon.relay:
        return False
    key = beacon.key
    if key in rsu.seen:
        return False
    rsu.seen.add(key)
    if len(rsu.queue) >= rsu.queue_cap:
        rsu.stats.dropped += 1
        return False
    rsu.queue.append(beacon.as_relay(rsu.node, rsu.seq, now))
    rsu.seq += 1
    rsu.stats.enqueued += 1
    return True


def service_queue(rsu: RsuState, now: int) -> Optional[Beacon]:
    """Return the next relay to hand to the MAC, or None.

    Stale heads (original older than one default beacon interval) are discarded.
    Does nothing while a previous relay is still in service.
    """
    if rsu.in_service is not None:
        return None
    while rsu.queue:
        head = rsu.queue[0]
        if now - head.relayed_gen_time > rsu.stale_age:
            rsu.queue.popleft()
            rsu.stats.stale_discarded += 1
            continue
        rsu.in_service = head
        return head
    return None


def complete_service(rsu: RsuState) -> Beacon:
    """The in-service relay finished its single transmission attempt."""
    if rsu.in_service is None:
        raise RuntimeError("no relay in service")
    head = rsu.queue.popleft()
    assert head is rsu.in_service
    rsu.in_service = None
    rsu.stats.forwarded += 1
    return head
