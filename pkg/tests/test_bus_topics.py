import pytest

from simbed.bus import (
    BEST_EFFORT,
    DuplicateNodeError,
    LinkModel,
    LinkTable,
    MessageBus,
    NodeInfo,
    NodeKind,
    NotAdvertisedError,
    QosProfile,
    Reliability,
)
from simbed.timing import ClockMap, Scheduler


def make_bus(default_link=None, seed=0):
    sched = Scheduler()
    clocks = ClockMap(sched, seed=seed)
    links = LinkTable(default_link or LinkModel(latency_mean_ms=0.5))
    return sched, MessageBus(sched, clocks, links, seed=seed)


def register(bus, node_id, kind=NodeKind.DUT):
    return bus.register_node(NodeInfo(node_id, kind))


# -- registry ---------------------------------------------------------------

def test_registry_roundtrip():
    _, bus = make_bus()
    register(bus, "dut1", NodeKind.DUT)
    found = bus.discover(kind=NodeKind.DUT)
    assert [i.node_id for i in found] == ["dut1"]


def test_duplicate_registration_rejected():
    _, bus = make_bus()
    register(bus, "dut1")
    with pytest.raises(DuplicateNodeError):
        register(bus, "dut1")


def test_discover_by_kind_enumerates_exactly():
    _, bus = make_bus()
    for i in range(4):
        register(bus, f"dut{i}", NodeKind.DUT)
    register(bus, "agv", NodeKind.AGV)
    duts = bus.discover(kind=NodeKind.DUT)
    assert len(duts) == 4
    assert all(i.kind is NodeKind.DUT for i in duts)
    assert len(bus.discover()) == 5


# -- topics -----------------------------------------------------------------

def test_publish_requires_advertisement():
    _, bus = make_bus()
    pub = register(bus, "pub")
    with pytest.raises(NotAdvertisedError):
        pub.publish("/t", b"x")


def test_publish_without_subscribers_is_silent():
    sched, bus = make_bus()
    pub = register(bus, "pub")
    pub.advertise("/t")
    pub.publish("/t", b"x")
    sched.run_until_idle()
    assert bus.stats.delivered == 0


def test_reliable_topic_delivers_everything_in_order_over_lossy_link():
    link = LinkModel(latency_mean_ms=1.0, latency_jitter_sigma_ms=0.4, loss_prob=0.3)
    sched, bus = make_bus(default_link=link, seed=42)
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/data")
    sub = sub_node.subscribe("/data", QosProfile(Reliability.RELIABLE, history_depth=2000))
    n = 10_000

    def publisher():
        for i in range(n):
            pub.publish("/data", str(i).encode(),
                        QosProfile(Reliability.RELIABLE, history_depth=2000))
            yield 0.001

    sched.spawn(publisher())
    sched.run_until_idle()
    assert len(sub.received) == n
    assert sub.received == [str(i).encode() for i in range(n)]
    assert bus.stats.retransmits > 0  # the loss was real


def test_best_effort_over_lossy_link_delivers_subset_without_duplicates():
    link = LinkModel(latency_mean_ms=1.0, loss_prob=0.3)
    sched, bus = make_bus(default_link=link, seed=7)
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/data")
    sub = sub_node.subscribe("/data", BEST_EFFORT)
    n = 10_000

    def publisher():
        for i in range(n):
            pub.publish("/data", str(i).encode(), BEST_EFFORT)
            yield 0.0005

    sched.spawn(publisher())
    sched.run_until_idle()
    received = sub.received
    assert 7000 - 200 <= len(received) <= 7000 + 200  # binomial(10^4, 0.7)
    assert len(set(received)) == len(received)  # no duplicates
    as_ints = [int(p) for p in received]
    assert set(as_ints) <= set(range(n))  # delivered subset of published


def test_best_effort_local_delivery_is_lossless():
    sched, bus = make_bus(default_link=LinkModel(latency_mean_ms=1.0, loss_prob=0.9))
    node = register(bus, "solo")
    node.advertise("/t")
    sub = node.subscribe("/t", BEST_EFFORT)
    for i in range(50):
        node.publish("/t", str(i).encode(), BEST_EFFORT)
    sched.run_until_idle()
    assert len(sub.received) == 50


# -- deadline QoS -------------------------------------------------------------

def test_deadline_miss_fires_when_publisher_stalls():
    sched, bus = make_bus(default_link=LinkModel(latency_mean_ms=0.1))
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/hb")
    sub = sub_node.subscribe("/hb", QosProfile(deadline_ms=100.0))

    def publisher():
        for _ in range(10):
            pub.publish("/hb", b"beat")
            yield 0.02
        yield 0.350  # stall
        pub.publish("/hb", b"beat")

    sched.spawn(publisher())
    sched.run_until_idle()
    assert len(sub.qos_events) >= 1
    assert all(e.kind == "deadline_missed" for e in sub.qos_events)


def test_no_deadline_means_no_qos_events():
    sched, bus = make_bus()
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/hb")
    sub = sub_node.subscribe("/hb", QosProfile())
    pub.publish("/hb", b"x")
    sched.run_until_idle(max_time=10.0)
    assert sub.qos_events == []


def test_10hz_publisher_never_misses_150ms_deadline():
    sched, bus = make_bus(default_link=LinkModel(latency_mean_ms=0.2))
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/hb")
    sub = sub_node.subscribe("/hb", QosProfile(deadline_ms=150.0))

    def publisher():
        for _ in range(600):  # 60 s at 10 Hz
            pub.publish("/hb", b"beat")
            yield 0.1

    proc = sched.spawn(publisher())
    sched.run_until_complete(proc.result)
    sub.unsubscribe()  # end of observation window
    sched.run_until_idle()
    assert sub.qos_events == []


def deadline_trace_oracle(arrival_times, start_time, end_time, deadline_s):
    """One miss per silence gap strictly exceeding the deadline."""
    misses = 0
    marks = [start_time] + arrival_times + [end_time]
    for prev, nxt in zip(marks[:-1], marks[1:]):
        if nxt - prev > deadline_s:
            misses += 1
    return misses


def test_deadline_events_match_trace_oracle():
    import random as _random
    rng = _random.Random(99)
    sched, bus = make_bus(default_link=LinkModel(latency_mean_ms=0.0))
    pub = register(bus, "pub")
    sub_node = register(bus, "sub")
    pub.advertise("/hb")
    deadline_s = 0.1
    arrivals = []
    sub = sub_node.subscribe(
        "/hb", QosProfile(deadline_ms=deadline_s * 1e3),
        on_msg=lambda payload, env: arrivals.append(sched.now()))

    def publisher():
        for _ in range(200):
            yield rng.uniform(0.01, 0.25)
            pub.publish("/hb", b"beat")

    proc = sched.spawn(publisher())
    sched.run_until_complete(proc.result)
    end = sched.now() + 1.0
    sched.run_until_idle(max_time=end)
    expected = deadline_trace_oracle(arrivals, 0.0, end, deadline_s)
    assert len(sub.qos_events) == expected
