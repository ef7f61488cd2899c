"""Four-timestamp time synchronization over a modeled link.

The server is the central node's clock, treated as the error-free
reference. Clients poll with the classic four-timestamp exchange,
filter the recent sample window by round-trip delay, and slew their
correction toward the surviving offset estimate. The poll interval
adapts between a floor and a cap depending on the measured offset.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from ..bus.types import LinkModel
from .clocks import DEFAULT_SLEW_PPM, NodeClock
from .scheduler import Scheduler


@dataclass
class SyncSample:
    t1: int  # client send (client clock, ns)
    t2: int  # server receive (server clock, ns)
    t3: int  # server send (server clock, ns)
    t4: int  # client receive (client clock, ns)
    offset_est_ms: float
    delay_est_ms: float


@dataclass
class SyncConfig:
    poll_start_s: float = 16.0
    poll_min_s: float = 16.0
    poll_max_s: float = 256.0
    window: int = 8
    adapt_threshold_ms: float = 1.0
    slew_ppm: float = DEFAULT_SLEW_PPM
    exchange_timeout_s: float = 1.0


def estimate(t1: int, t2: int, t3: int, t4: int) -> tuple[float, float]:
    """Offset and round-trip delay (ms) from the four timestamps."""
    offset_ns = ((t2 - t1) + (t3 - t4)) / 2.0
    delay_ns = (t4 - t1) - (t3 - t2)
    return offset_ns * 1e-6, delay_ns * 1e-6


def ntp_exchange(
    client: NodeClock,
    server: NodeClock,
    link: LinkModel,
    rng: random.Random,
    timeout_s: float = 1.0,
):
    """Process: one client/server exchange. Returns a SyncSample, or None
    when either direction is lost (the client waits out the timeout)."""
    t1 = client.read_ns()
    if link.draw_lost(rng):
        yield timeout_s
        return None
    yield link.draw_delay_s(rng, forward=True)
    t2 = server.read_ns()
    t3 = server.read_ns()
    if link.draw_lost(rng):
        yield timeout_s
        return None
    yield link.draw_delay_s(rng, forward=False)
    t4 = client.read_ns()
    offset_ms, delay_ms = estimate(t1, t2, t3, t4)
    return SyncSample(t1, t2, t3, t4, offset_ms, delay_ms)


class SyncClient:
    """Drives one node's clock discipline against the reference clock."""

    def __init__(
        self,
        sched: Scheduler,
        clock: NodeClock,
        server_clock: NodeClock,
        link: LinkModel,
        rng: random.Random,
        cfg: SyncConfig | None = None,
    ) -> None:
        self._sched = sched
        self.clock = clock
        self._server = server_clock
        self._link = link
        self._rng = rng
        self.cfg = cfg or SyncConfig()
        self.poll_s = self.cfg.poll_start_s
        # window entries: (sample, correction active when it was taken)
        self._window: list[tuple[SyncSample, float]] = []
        self.samples_taken = 0
        self.samples_lost = 0
        self._proc = None

    def start(self) -> None:
        if self._proc is None:
            self._proc = self._sched.spawn(self._run())

    def _run(self):
        while True:
            sample = yield from ntp_exchange(
                self.clock, self._server, self._link, self._rng, self.cfg.exchange_timeout_s
            )
            if sample is None:
                self.samples_lost += 1
            else:
                self.samples_taken += 1
                self._window.append((sample, self.clock.correction_s()))
                if len(self._window) > self.cfg.window:
                    self._window.pop(0)
                self.discipline_step(sample)
            yield self.poll_s

    def discipline_step(self, newest: SyncSample) -> float:
        """Update the slewed correction from the min-delay window sample and
        adapt the poll interval from the newest offset estimate."""
        best_sample, best_corr = min(self._window, key=lambda e: e[0].delay_est_ms)
        # offset_est is what the client should add; the read subtracts the
        # correction, so the target is the correction active at sampling
        # time minus the offset seen then.
        target = best_corr - best_sample.offset_est_ms * 1e-3
        if not self.clock.step_correction(target):
            self.clock.slew_correction(target, self.cfg.slew_ppm)
        if abs(newest.offset_est_ms) < self.cfg.adapt_threshold_ms:
            self.poll_s = min(self.poll_s * 2.0, self.cfg.poll_max_s)
        else:
            self.poll_s = max(self.poll_s / 2.0, self.cfg.poll_min_s)
        return self.clock.correction_s()
