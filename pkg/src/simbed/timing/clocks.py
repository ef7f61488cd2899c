"""Per-node imperfect clocks.

Each node reads time through its own clock, which lies: a fixed initial
offset, a crystal drift proportional to elapsed time, and a per-read
jitter. Synchronization fights back through a disciplined correction that
is subtracted from reads; corrections are slewed (rate-limited), never
stepped, except for the one initial step a fresh client is allowed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

MAX_DRIFT_PPM = 200.0
DEFAULT_SLEW_PPM = 500.0


@dataclass
class ClockState:
    """Error parameters of one node's clock."""

    offset0_ms: float = 0.0
    drift_ppm: float = 0.0
    read_jitter_sigma_us: float = 0.0

    def __post_init__(self) -> None:
        if abs(self.drift_ppm) > MAX_DRIFT_PPM:
            raise ValueError(f"drift {self.drift_ppm} ppm exceeds ±{MAX_DRIFT_PPM}")
        if self.read_jitter_sigma_us < 0:
            raise ValueError("read jitter must be >= 0")


class NodeClock:
    """A clock owned by one node, read against true scheduler time."""

    def __init__(self, node_id: str, state: ClockState, sched, rng: random.Random) -> None:
        self.node_id = node_id
        self.state = state
        self._sched = sched
        self._rng = rng
        # Slew segment: correction(t) = base + rate * (t - t0), clamped at target.
        self._corr_base = 0.0
        self._corr_target = 0.0
        self._corr_rate = 0.0
        self._corr_t0 = 0.0
        self._stepped_once = False

    # -- correction --------------------------------------------------------

    def correction_s(self, true_t: float | None = None) -> float:
        t = self._sched.now() if true_t is None else true_t
        if self._corr_rate == 0.0:
            return self._corr_target
        moved = self._corr_base + self._corr_rate * (t - self._corr_t0)
        if self._corr_rate > 0:
            return min(moved, self._corr_target)
        return max(moved, self._corr_target)

    def step_correction(self, correction_s: float) -> bool:
        """Apply an immediate step; allowed only once (initial sync)."""
        if self._stepped_once:
            return False
        self._corr_base = self._corr_target = correction_s
        self._corr_rate = 0.0
        self._stepped_once = True
        return True

    def slew_correction(self, target_s: float, slew_ppm: float = DEFAULT_SLEW_PPM) -> None:
        now = self._sched.now()
        current = self.correction_s(now)
        self._corr_base = current
        self._corr_target = target_s
        self._corr_t0 = now
        rate = slew_ppm * 1e-6
        self._corr_rate = rate if target_s >= current else -rate
        if target_s == current:
            self._corr_rate = 0.0

    # -- reads ---------------------------------------------------------------

    def raw_error_s(self, true_t: float) -> float:
        """Uncorrected, jitter-free clock error at true time t."""
        return self.state.offset0_ms * 1e-3 + self.state.drift_ppm * 1e-6 * true_t

    def error_s(self, true_t: float | None = None) -> float:
        """Disciplined, jitter-free clock error (what sync must defeat)."""
        t = self._sched.now() if true_t is None else true_t
        return self.raw_error_s(t) - self.correction_s(t)

    def read_s(self, true_t: float | None = None) -> float:
        """Local time in seconds, including a fresh jitter draw."""
        t = self._sched.now() if true_t is None else true_t
        jitter = 0.0
        if self.state.read_jitter_sigma_us > 0:
            jitter = self._rng.gauss(0.0, self.state.read_jitter_sigma_us * 1e-6)
        return t + self.error_s(t) + jitter

    def read_ns(self, true_t: float | None = None) -> int:
        return int(round(self.read_s(true_t) * 1e9))


class ClockMap:
    """Registry of node clocks sharing one scheduler."""

    def __init__(self, sched, seed: int | str = 0) -> None:
        self._sched = sched
        self._seed = seed
        self._clocks: dict[str, NodeClock] = {}

    def add(self, node_id: str, state: ClockState | None = None) -> NodeClock:
        if node_id in self._clocks:
            raise ValueError(f"clock for {node_id!r} already exists")
        rng = random.Random(f"{self._seed}/clock/{node_id}")
        clock = NodeClock(node_id, state or ClockState(), self._sched, rng)
        self._clocks[node_id] = clock
        return clock

    def get(self, node_id: str) -> NodeClock:
        try:
            return self._clocks[node_id]
        except KeyError:
            raise KeyError(f"unknown node clock {node_id!r}") from None

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._clocks

    def now_ns(self, node_id: str) -> int:
        return self.get(node_id).read_ns()
