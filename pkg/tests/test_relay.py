import pytest
from hypothesis import given, settings, strategies as st

from v2xsim.mac import Beacon
from v2xsim.relay import RsuState, complete_service, on_rsu_receive, service_queue
from v2xsim.scenario import ScenarioConfig

CFG = ScenarioConfig()
MS = 1_000_000


def make_rsu(cap=100):
    return RsuState.from_config(80, (120.0, 0.0), CFG.replace(rsu_queue_cap=cap))


def test_fresh_beacon_enqueued():
    rsu = make_rsu()
    assert on_rsu_receive(rsu, Beacon(7, 42, 0), 1 * MS)
    assert rsu.q_len == 1 and (7, 42) in rsu.seen
    head = rsu.queue[0]
    assert head.relay and head.key == (7, 42) and head.origin == 80


def test_duplicate_ignored():
    rsu = make_rsu()
    on_rsu_receive(rsu, Beacon(7, 42, 0), 1 * MS)
    assert not on_rsu_receive(rsu, Beacon(7, 42, 0), 2 * MS)
    assert rsu.q_len == 1 and rsu.stats.enqueued == 1


def test_relays_never_requeued():
    rsu = make_rsu()
    relay = Beacon(7, 42, 0).as_relay(81, 0, 1 * MS)
    assert not on_rsu_receive(rsu, relay, 2 * MS)
    assert rsu.q_len == 0 and not rsu.seen


def test_drop_tail_at_cap():
    rsu = make_rsu()
    for m in range(100):
        assert on_rsu_receive(rsu, Beacon(1, m, 0), 0)
    assert not on_rsu_receive(rsu, Beacon(2, 0, 0), 0)
    assert rsu.q_len == 100 and rsu.stats.dropped == 1
    assert rsu.queue[-1].key == (1, 99)


def test_service_fifo_and_q_len():
    rsu = make_rsu()
    for m in range(3):
        on_rsu_receive(rsu, Beacon(3, m, 0), 0)
    head = service_queue(rsu, 1 * MS)
    assert head.key == (3, 0)
    assert service_queue(rsu, 1 * MS) is None  # one frame in service at a time
    assert complete_service(rsu) is head
    assert rsu.q_len == 2
    assert service_queue(rsu, 2 * MS).key == (3, 1)


def test_empty_queue_noop():
    rsu = make_rsu()
    assert service_queue(rsu, 0) is None
    with pytest.raises(RuntimeError):
        complete_service(rsu)


def test_stale_head_discarded():
    rsu = make_rsu()
    on_rsu_receive(rsu, Beacon(3, 0, 0), 0)
    on_rsu_receive(rsu, Beacon(4, 0, 90 * MS), 91 * MS)
    head = service_queue(rsu, 101 * MS)
    assert head.key == (4, 0)
    assert rsu.stats.stale_discarded == 1


@settings(max_examples=100, deadline=None)
@given(ops=st.lists(st.tuples(st.sampled_from(["rx", "serve", "done"]),
                              st.integers(0, 5), st.integers(0, 20)), max_size=300),
       cap=st.integers(1, 10))
def test_conservation_and_at_most_once(ops, cap):
    rsu = make_rsu(cap)
    forwarded = []
    now = 0
    for op, origin, msg in ops:
        now += 5 * MS
        if op == "rx":
            on_rsu_receive(rsu, Beacon(origin, msg, now - 2 * MS), now)
        elif op == "serve":
            service_queue(rsu, now)
        elif rsu.in_service is not None:
            forwarded.append(complete_service(rsu).key)
        assert rsu.q_len <= cap
        s = rsu.stats
        assert s.enqueued == s.forwarded + s.stale_discarded + rsu.q_len
    assert len(forwarded) == len(set(forwarded))
