import pytest

from simbed.bus import (
    ActionCanceled,
    ActionFailed,
    LinkModel,
    LinkTable,
    MessageBus,
    NodeInfo,
    NodeKind,
    ServiceTimeout,
    UnknownActionError,
    UnknownServiceError,
)
from simbed.timing import ClockMap, Scheduler


def make_bus(default_link=None, seed=0):
    sched = Scheduler()
    clocks = ClockMap(sched, seed=seed)
    links = LinkTable(default_link or LinkModel(latency_mean_ms=0.5))
    return sched, MessageBus(sched, clocks, links, seed=seed)


def register(bus, node_id, kind=NodeKind.DUT):
    return bus.register_node(NodeInfo(node_id, kind))


# -- services -----------------------------------------------------------------

def test_echo_service_roundtrip():
    sched, bus = make_bus()
    server = register(bus, "server", NodeKind.CENTRAL)
    client = register(bus, "client")
    server.serve("/echo", lambda req: req)
    fut = client.call("/echo", b"x", timeout_s=1.0)
    sched.run_until_idle()
    assert fut.result() == b"x"


def test_unknown_service_raises_immediately():
    _, bus = make_bus()
    client = register(bus, "client")
    with pytest.raises(UnknownServiceError):
        client.call("/nope", b"", timeout_s=1.0)


def test_slow_handler_times_out_and_late_response_is_discarded():
    sched, bus = make_bus()
    server = register(bus, "server", NodeKind.CENTRAL)
    client = register(bus, "client")

    def slow(req):
        def work():
            yield 2.0  # 2x the caller timeout
            return b"late"
        return work()

    server.serve("/slow", slow)
    fut = client.call("/slow", b"", timeout_s=1.0)
    sched.run_until_idle()
    with pytest.raises(ServiceTimeout):
        fut.result()
    assert bus.stats.late_responses == 1  # the response arrived and was dropped


def test_every_call_resolves_exactly_once_under_loss():
    link = LinkModel(latency_mean_ms=1.0, latency_jitter_sigma_ms=0.5, loss_prob=0.3)
    sched, bus = make_bus(default_link=link, seed=5)
    server = register(bus, "server", NodeKind.CENTRAL)
    client = register(bus, "client")
    server.serve("/echo", lambda req: req)
    futures = [client.call("/echo", str(i).encode(), timeout_s=5.0) for i in range(200)]
    sched.run_until_idle()
    outcomes = []
    for i, fut in enumerate(futures):
        assert fut.done
        try:
            outcomes.append(fut.result())
        except ServiceTimeout:
            outcomes.append("timeout")
    responses = [o for o in outcomes if o != "timeout"]
    assert responses == [str(i).encode() for i in range(len(responses))]


# -- actions -------------------------------------------------------------------

def chunked_action(goal, ctx):
    chunks = int(goal.decode())
    for i in range(1, chunks + 1):
        if ctx.cancel_requested:
            raise ActionCanceled("stopped by client")
        yield 0.05
        ctx.feedback(f"{100 * i // chunks}".encode())
    return b"done"


def test_action_feedback_sequence_and_result():
    sched, bus = make_bus()
    server = register(bus, "server")
    client = register(bus, "client", NodeKind.CENTRAL)
    server.action_server("/work", chunked_action)
    handle = client.start_action("/work", b"4")
    sched.run_until_idle()
    assert handle.accepted.result() is True
    assert [f.decode() for f in handle.feedbacks] == ["25", "50", "75", "100"]
    result = handle.result.result()
    assert result.status == "succeeded"
    assert result.payload == b"done"


def test_action_cancel_midway():
    sched, bus = make_bus()
    server = register(bus, "server")
    client = register(bus, "client", NodeKind.CENTRAL)
    server.action_server("/work", chunked_action)
    handle = client.start_action("/work", b"100")
    sched.after(0.6, handle.cancel)
    sched.run_until_idle()
    result = handle.result.result()
    assert result.status == "canceled"
    feedback_count = len(handle.feedbacks)
    sched.run_until_idle()
    assert len(handle.feedbacks) == feedback_count  # nothing after the result


def test_unknown_action_raises_before_any_feedback():
    _, bus = make_bus()
    client = register(bus, "client", NodeKind.CENTRAL)
    with pytest.raises(UnknownActionError):
        client.start_action("/ghost", b"")


def test_goal_rejection_reported_as_failed():
    sched, bus = make_bus()
    server = register(bus, "server")
    client = register(bus, "client", NodeKind.CENTRAL)
    server.action_server("/work", chunked_action, accept=lambda goal: (False, "busy"))
    handle = client.start_action("/work", b"4")
    sched.run_until_idle()
    assert handle.accepted.result() is False
    result = handle.result.result()
    assert result.status == "failed"
    assert result.error == "busy"


def test_server_crash_fails_goal_with_connection_lost():
    sched, bus = make_bus()
    server = register(bus, "server")
    client = register(bus, "client", NodeKind.CENTRAL)
    server.action_server("/work", chunked_action)
    handle = client.start_action("/work", b"1000")
    sched.run_until_idle(max_time=1.0)
    server.unregister()
    sched.run_until_idle()
    result = handle.result.result()
    assert result.status == "failed"
    assert result.error == "connection_lost"


def test_action_failure_propagates_reason():
    sched, bus = make_bus()
    server = register(bus, "server")
    client = register(bus, "client", NodeKind.CENTRAL)

    def failing(goal, ctx):
        yield 0.01
        raise ActionFailed("checksum_mismatch")

    server.action_server("/work", failing)
    handle = client.start_action("/work", b"")
    sched.run_until_idle()
    result = handle.result.result()
    assert result.status == "failed"
    assert result.error == "checksum_mismatch"
