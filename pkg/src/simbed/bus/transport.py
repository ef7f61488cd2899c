"""Simulated transport: per-pair link models and a reliable channel layer.

The transport moves envelopes between nodes with modeled latency, jitter
and loss. Reliable flows add sequence numbers, acks and retransmission
with exponential backoff on top; best-effort traffic is sent exactly once.
"""

from __future__ import annotations

import logging
import random
from collections import OrderedDict
from typing import Callable, Optional

from ..timing.scheduler import Scheduler
from .types import Envelope, LinkModel

log = logging.getLogger(__name__)

RETRANSMIT_BASE_S = 0.050
RETRANSMIT_CAP_S = 1.0


class LinkTable:
    """Ordered-pair link lookup with a shared default.

    A link set for (a, b) serves both directions; sends a->b use the
    model's forward leg, b->a the backward one.
    """

    def __init__(self, default: Optional[LinkModel] = None) -> None:
        self.default = default or LinkModel()
        self._links: dict[tuple[str, str], LinkModel] = {}

    def set(self, a: str, b: str, link: LinkModel) -> None:
        self._links[(a, b)] = link

    def get(self, src: str, dst: str) -> tuple[LinkModel, bool]:
        """Returns (model, is_forward) for a src->dst send."""
        if (src, dst) in self._links:
            return self._links[(src, dst)], True
        if (dst, src) in self._links:
            return self._links[(dst, src)], False
        return self.default, True


class SimTransport:
    """Schedules deliveries through the link table; loss drops silently."""

    def __init__(self, sched: Scheduler, links: LinkTable, rng: random.Random) -> None:
        self._sched = sched
        self.links = links
        self._rng = rng

    def unicast(self, src: str, dst: str, deliver: Callable, *args) -> bool:
        """One attempt; returns False when the link ate the message."""
        if src == dst:
            self._sched.after(0.0, deliver, *args)
            return True
        link, forward = self.links.get(src, dst)
        if link.draw_lost(self._rng):
            return False
        delay = link.draw_delay_s(self._rng, forward)
        self._sched.after(delay, deliver, *args)
        return True


class ReliableFlow:
    """In-order exactly-once delivery for one (src, dst, label) stream.

    Sender keeps unacked envelopes (bounded by history_depth, oldest
    dropped with a warning on overflow) and retransmits on a doubling
    backoff. The receiver acks every arrival, drops duplicates, and holds
    out-of-order envelopes until the gap fills.
    """

    def __init__(
        self,
        sched: Scheduler,
        transport: SimTransport,
        src: str,
        dst: str,
        label: str,
        deliver: Callable[[Envelope], None],
        history_depth: int = 100,
        on_retransmit: Optional[Callable[[], None]] = None,
        on_drop: Optional[Callable[[], None]] = None,
    ) -> None:
        self._sched = sched
        self._transport = transport
        self.src = src
        self.dst = dst
        self.label = label
        self._deliver = deliver
        self.history_depth = history_depth
        self._on_retransmit = on_retransmit
        self._on_drop = on_drop
        self._next_seq = 0
        self._unacked: "OrderedDict[int, Envelope]" = OrderedDict()
        self._timers: dict[int, object] = {}
        self._attempts: dict[int, int] = {}
        self._expect = 0
        self._held: dict[int, Envelope] = {}
        self.closed = False

    # -- sender side ---------------------------------------------------------

    def send(self, env: Envelope) -> None:
        seq = self._next_seq
        self._next_seq += 1
        self._unacked[seq] = env
        self._attempts[seq] = 0
        if len(self._unacked) > self.history_depth:
            old_seq, _ = self._unacked.popitem(last=False)
            timer = self._timers.pop(old_seq, None)
            if timer is not None:
                timer.cancel()
            self._attempts.pop(old_seq, None)
            log.warning("flow %s->%s %s: history overflow, dropped seq %d",
                        self.src, self.dst, self.label, old_seq)
            if self._on_drop:
                self._on_drop()
        self._transmit(seq)

    def _transmit(self, seq: int) -> None:
        if self.closed or seq not in self._unacked:
            return
        env = self._unacked[seq]
        self._transport.unicast(self.src, self.dst, self._on_arrival, seq, env)
        attempt = self._attempts[seq]
        backoff = min(RETRANSMIT_BASE_S * (2 ** attempt), RETRANSMIT_CAP_S)
        self._attempts[seq] = attempt + 1
        if attempt > 0 and self._on_retransmit:
            self._on_retransmit()
        self._timers[seq] = self._sched.after(backoff, self._transmit, seq)

    def _on_ack(self, seq: int) -> None:
        if seq in self._unacked:
            del self._unacked[seq]
            self._attempts.pop(seq, None)
            timer = self._timers.pop(seq, None)
            if timer is not None:
                timer.cancel()

    # -- receiver side -------------------------------------------------------

    def _on_arrival(self, seq: int, env: Envelope) -> None:
        if self.closed:
            return
        self._transport.unicast(self.dst, self.src, self._on_ack, seq)
        if seq < self._expect:
            return  # duplicate
        if seq == self._expect:
            self._expect += 1
            self._deliver(env)
            while self._expect in self._held:
                held = self._held.pop(self._expect)
                self._expect += 1
                self._deliver(held)
        else:
            self._held[seq] = env

    def close(self) -> None:
        self.closed = True
        for timer in self._timers.values():
            timer.cancel()
        self._timers.clear()
        self._unacked.clear()
        self._held.clear()
