import pytest

from simbed.timing import Future, Scheduler, SimTimeout, Wait, sleep


def test_events_run_in_time_order():
    sched = Scheduler()
    trace = []
    sched.after(0.5, trace.append, "b")
    sched.after(0.1, trace.append, "a")
    sched.after(0.9, trace.append, "c")
    sched.run_until_idle()
    assert trace == ["a", "b", "c"]
    assert sched.now() == pytest.approx(0.9)


def test_same_time_events_run_in_scheduling_order():
    sched = Scheduler()
    trace = []
    for tag in range(20):
        sched.at(1.0, trace.append, tag)
    sched.run_until_idle()
    assert trace == list(range(20))


def test_identical_programs_produce_identical_traces():
    def program():
        sched = Scheduler()
        trace = []

        def tick(n):
            trace.append((round(sched.now(), 9), n))
            if n < 50:
                sched.after(0.01 * ((n * 7) % 5 + 1), tick, n + 1)

        sched.after(0.0, tick, 0)
        sched.run_until_idle()
        return trace

    assert program() == program()


def test_cancelled_timer_does_not_fire():
    sched = Scheduler()
    trace = []
    timer = sched.after(0.1, trace.append, "x")
    timer.cancel()
    sched.run_until_idle()
    assert trace == []


def test_process_sleep_advances_time():
    sched = Scheduler()
    seen = []

    def proc():
        seen.append(sched.now())
        yield sleep(2.0)
        seen.append(sched.now())
        yield 0.5
        seen.append(sched.now())
        return "done"

    p = sched.spawn(proc())
    result = sched.run_until_complete(p.result)
    assert result == "done"
    assert seen == [pytest.approx(0.0), pytest.approx(2.0), pytest.approx(2.5)]


def test_process_waits_on_future():
    sched = Scheduler()
    fut = Future()
    got = []

    def producer():
        yield 1.0
        fut.set_result(42)

    def consumer():
        value = yield fut
        got.append((sched.now(), value))

    sched.spawn(producer())
    sched.spawn(consumer())
    sched.run_until_idle()
    assert got == [(pytest.approx(1.0), 42)]


def test_wait_timeout_raises_in_process():
    sched = Scheduler()
    fut = Future()
    outcome = []

    def proc():
        try:
            yield Wait(fut, timeout=0.25)
        except SimTimeout:
            outcome.append(sched.now())

    sched.spawn(proc())
    sched.run_until_idle()
    assert outcome == [pytest.approx(0.25)]


def test_wait_resolved_before_timeout_cancels_timer():
    sched = Scheduler()
    fut = Future()

    def proc():
        value = yield Wait(fut, timeout=10.0)
        return value

    p = sched.spawn(proc())
    sched.after(0.5, fut.set_result, "ok")
    assert sched.run_until_complete(p.result) == "ok"
    sched.run_until_idle()
    assert sched.now() < 1.0  # the 10 s timeout never ran


def test_process_exception_lands_in_result_future():
    sched = Scheduler()

    def proc():
        yield 0.1
        raise ValueError("boom")

    p = sched.spawn(proc())
    sched.run_until_idle()
    with pytest.raises(ValueError, match="boom"):
        p.result.result()


def test_run_for_stops_clock_at_bound():
    sched = Scheduler()
    sched.after(5.0, lambda: None)
    sched.run_for(2.0)
    assert sched.now() == pytest.approx(2.0)
    sched.run_until_idle()
    assert sched.now() == pytest.approx(5.0)


def test_run_until_complete_raises_when_idle():
    sched = Scheduler()
    fut = Future()
    with pytest.raises(RuntimeError):
        sched.run_until_complete(fut)
