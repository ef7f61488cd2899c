"""Discrete-event scheduler: the single owner of simulated time.

Every delay in the testbed routes through one scheduler instance. In
virtual mode events execute back-to-back as fast as the host allows, which
makes runs deterministic: identical seeds and identical event programs
yield identical event order, bit-exact. In paced mode the same event queue
is replayed against the wall clock (optionally scaled), which is what the
live REST server uses.

Processes are plain generators. They may yield:

  * a number            -> sleep that many simulated seconds
  * a Future            -> suspend until the future resolves
  * Wait(future, t)     -> as above, but raise SimTimeout after t seconds
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time as _wall
from collections import deque
from typing import Any, Callable, Generator, Optional


class SimTimeout(Exception):
    """A wait expired before its future resolved."""


class Future:
    """One-shot result container, resolvable with a value or an error."""

    __slots__ = ("_done", "_value", "_exc", "_callbacks")

    def __init__(self) -> None:
        self._done = False
        self._value: Any = None
        self._exc: Optional[BaseException] = None
        self._callbacks: list[Callable[[Future], None]] = []

    @property
    def done(self) -> bool:
        return self._done

    def result(self) -> Any:
        if not self._done:
            raise RuntimeError("future not resolved")
        if self._exc is not None:
            raise self._exc
        return self._value

    def exception(self) -> Optional[BaseException]:
        return self._exc if self._done else None

    def set_result(self, value: Any = None) -> None:
        if self._done:
            raise RuntimeError("future already resolved")
        self._done = True
        self._value = value
        self._fire()

    def set_exception(self, exc: BaseException) -> None:
        if self._done:
            raise RuntimeError("future already resolved")
        self._done = True
        self._exc = exc
        self._fire()

    def add_done_callback(self, fn: Callable[[Future], None]) -> None:
        if self._done:
            fn(self)
        else:
            self._callbacks.append(fn)

    def _fire(self) -> None:
        callbacks, self._callbacks = self._callbacks, []
        for fn in callbacks:
            fn(self)


class Wait:
    """Yieldable: wait for `future`, raising SimTimeout after `timeout` s."""

    __slots__ = ("future", "timeout")

    def __init__(self, future: Future, timeout: Optional[float] = None) -> None:
        self.future = future
        self.timeout = timeout


class Timer:
    __slots__ = ("time", "seq", "fn", "args", "cancelled")

    def __init__(self, time_s: float, seq: int, fn: Callable, args: tuple) -> None:
        self.time = time_s
        self.seq = seq
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __lt__(self, other: "Timer") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)


class Process:
    """A generator driven by the scheduler; `result` resolves on return."""

    def __init__(self, sched: "Scheduler", gen: Generator) -> None:
        self._sched = sched
        self._gen = gen
        self.result = Future()

    def _step(self, send_value: Any = None, throw_exc: Optional[BaseException] = None) -> None:
        try:
            if throw_exc is not None:
                yielded = self._gen.throw(throw_exc)
            else:
                yielded = self._gen.send(send_value)
        except StopIteration as stop:
            if not self.result.done:
                self.result.set_result(stop.value)
            return
        except BaseException as exc:  # noqa: BLE001 - process died; surface via future
            if not self.result.done:
                self.result.set_exception(exc)
            return
        self._arm(yielded)

    def _arm(self, yielded: Any) -> None:
        sched = self._sched
        if isinstance(yielded, (int, float)):
            sched.after(float(yielded), self._step)
        elif isinstance(yielded, Future):
            yielded.add_done_callback(self._resume_from)
        elif isinstance(yielded, Wait):
            self._arm_wait(yielded)
        else:
            self._step(throw_exc=TypeError(f"process yielded {yielded!r}"))

    def _arm_wait(self, wait: Wait) -> None:
        fired = [False]

        def on_done(fut: Future) -> None:
            if fired[0]:
                return
            fired[0] = True
            if timer is not None:
                timer.cancel()
            self._resume_from(fut)

        def on_timeout() -> None:
            if fired[0]:
                return
            fired[0] = True
            self._step(throw_exc=SimTimeout(f"wait timed out after {wait.timeout}s"))

        timer = self._sched.after(wait.timeout, on_timeout) if wait.timeout is not None else None
        wait.future.add_done_callback(on_done)

    def _resume_from(self, fut: Future) -> None:
        exc = fut.exception()
        if exc is not None:
            self._step(throw_exc=exc)
        else:
            self._step(fut.result())


class Scheduler:
    """Single-threaded event queue over virtual seconds."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = float(start)
        self._heap: list[Timer] = []
        self._seq = itertools.count()
        self._injected: deque = deque()
        self._cond = threading.Condition()
        self._stop = False

    def now(self) -> float:
        return self._now

    def at(self, time_s: float, fn: Callable, *args: Any) -> Timer:
        if time_s < self._now:
            time_s = self._now
        timer = Timer(time_s, next(self._seq), fn, args)
        heapq.heappush(self._heap, timer)
        return timer

    def after(self, delay_s: float, fn: Callable, *args: Any) -> Timer:
        return self.at(self._now + max(0.0, float(delay_s)), fn, *args)

    def spawn(self, gen: Generator) -> Process:
        proc = Process(self, gen)
        self.after(0.0, proc._step)
        return proc

    # -- draining (virtual mode) ------------------------------------------

    def _pop_runnable(self) -> Optional[Timer]:
        while self._heap:
            timer = heapq.heappop(self._heap)
            if not timer.cancelled:
                return timer
        return None

    def run_until_idle(self, max_time: Optional[float] = None, max_events: int = 50_000_000) -> None:
        """Drain the queue; stops at max_time (clock left there) if given."""
        for _ in range(max_events):
            timer = self._pop_runnable()
            if timer is None:
                if max_time is not None and max_time > self._now:
                    self._now = max_time
                return
            if max_time is not None and timer.time > max_time:
                heapq.heappush(self._heap, timer)
                self._now = max_time
                return
            self._now = timer.time
            timer.fn(*timer.args)
        raise RuntimeError("run_until_idle exceeded event budget")

    def run_for(self, duration_s: float) -> None:
        self.run_until_idle(max_time=self._now + duration_s)

    def run_until_complete(self, future: Future, max_time: Optional[float] = None) -> Any:
        """Execute events until `future` resolves; returns its result."""
        while not future.done:
            timer = self._pop_runnable()
            if timer is None:
                raise RuntimeError("scheduler idle but future unresolved")
            if max_time is not None and timer.time > max_time:
                raise RuntimeError(f"future unresolved at t={max_time}")
            self._now = timer.time
            timer.fn(*timer.args)
        return future.result()

    # -- paced mode (live server) -----------------------------------------

    def call_threadsafe(self, fn: Callable, *args: Any) -> None:
        """Inject a callback from another thread; runs at current sim time."""
        with self._cond:
            self._injected.append((fn, args))
            self._cond.notify()

    def stop(self) -> None:
        with self._cond:
            self._stop = True
            self._cond.notify()

    def serve(self, time_scale: float = 1.0) -> None:
        """Replay the queue against the wall clock (virtual = wall * scale).

        Runs until stop(). Injected callbacks execute at the wall-mapped
        virtual time, so interactive commands land "now".
        """
        wall0 = _wall.monotonic()
        virt0 = self._now
        while True:
            with self._cond:
                if self._stop:
                    return
                while self._injected:
                    fn, args = self._injected.popleft()
                    wall_virt = virt0 + (_wall.monotonic() - wall0) * time_scale
                    self._now = max(self._now, wall_virt)
                    self._run_outside_lock(fn, args)
                timer = self._pop_runnable()
                if timer is None:
                    self._cond.wait(timeout=0.25)
                    continue
                wall_due = wall0 + (timer.time - virt0) / time_scale
                delay = wall_due - _wall.monotonic()
                if delay > 0:
                    heapq.heappush(self._heap, timer)
                    self._cond.wait(timeout=min(delay, 0.25))
                    continue
                self._now = max(self._now, timer.time)
                self._run_outside_lock(timer.fn, timer.args)

    def _run_outside_lock(self, fn: Callable, args: tuple) -> None:
        self._cond.release()
        try:
            fn(*args)
        finally:
            self._cond.acquire()


def sleep(duration_s: float) -> float:
    """Readability helper for `yield sleep(x)` inside processes."""
    return float(duration_s)
