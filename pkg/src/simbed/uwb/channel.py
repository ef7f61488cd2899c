"""The modeled UWB channel: membership, geometry, noise, loss, NLOS.

Ranging data leaves this module only through the tag firmware's log
lines; orchestration traffic never enters it. The exchange counter is the
audit hook for that separation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Optional

from ..env.geometry import Pose3D
from ..timing.scheduler import Scheduler
from .dstwr import C_M_PER_S, TwrTimestamps, build_timestamps, dstwr_tof_ns


@dataclass
class NlosZone:
    polygon: list[tuple[float, float]]  # convex, horizontal plane
    extra_bias_m: float = 0.3


def point_in_polygon(x: float, y: float, polygon: list[tuple[float, float]]) -> bool:
    """Ray-cast membership test (even-odd rule)."""
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


@dataclass
class ChannelParams:
    rf_channel: int = 9
    center_freq_mhz: float = 7987.2
    bandwidth_mhz: float = 499.2
    noise_sigma_m: float = 0.05
    bias_m: float = 0.0
    per: float = 0.02  # packet error rate per exchange
    nlos_zones: list[NlosZone] = field(default_factory=list)
    reply_time_s: float = 0.001
    exchange_duration_s: float = 0.004  # radio busy time per exchange

    def __post_init__(self) -> None:
        if self.noise_sigma_m < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0.0 <= self.per <= 1.0:
            raise ValueError("per must be in [0,1]")


@dataclass
class RangeMeasurement:
    tag_id: int
    anchor_id: int
    exchange_index: int
    distance_m: Optional[float]
    status: str  # ok | dropped
    timestamps: Optional[TwrTimestamps] = None


class RadioWorld:
    """Registry of live radios plus the physics of one exchange."""

    def __init__(self, sched: Scheduler, params: ChannelParams, rng: random.Random) -> None:
        self.sched = sched
        self.params = params
        self.rng = rng
        self._anchors: dict[int, object] = {}  # radio id -> SimDevice
        self._tags: dict[int, object] = {}
        self._ids: dict[object, int] = {}  # device -> radio id
        self.exchange_count = 0  # audit: only ranging touches the channel

    # -- membership -------------------------------------------------------------

    def register_anchor(self, radio_id: int, device) -> None:
        self._anchors[radio_id] = device
        self._ids[device] = radio_id

    def register_tag(self, radio_id: int, device) -> None:
        self._tags[radio_id] = device
        self._ids[device] = radio_id

    def unregister(self, device) -> None:
        radio_id = self._ids.pop(device, None)
        if radio_id is not None:
            if self._anchors.get(radio_id) is device:
                del self._anchors[radio_id]
            if self._tags.get(radio_id) is device:
                del self._tags[radio_id]

    def live_anchor_ids(self) -> list[int]:
        return sorted(self._anchors)

    @staticmethod
    def _position(device) -> Pose3D:
        if device.position_provider is not None:
            return device.position_provider()
        return Pose3D()

    # -- ranging -------------------------------------------------------------------

    def exchange(self, tag_device, anchor_id: int, exchange_index: int):
        """Process: one DS-TWR exchange; the radio is busy for its duration."""
        yield self.params.exchange_duration_s
        self.exchange_count += 1
        tag_id = self._ids.get(tag_device, -1)
        anchor = self._anchors.get(anchor_id)
        if anchor is None or not anchor.power:
            return RangeMeasurement(tag_id, anchor_id, exchange_index, None, "dropped")
        if self.params.per > 0 and self.rng.random() < self.params.per:
            return RangeMeasurement(tag_id, anchor_id, exchange_index, None, "dropped")
        tag_pos = self._position(tag_device)
        anchor_pos = self._position(anchor)
        true_dist = math.sqrt((tag_pos.x - anchor_pos.x) ** 2
                              + (tag_pos.y - anchor_pos.y) ** 2
                              + (tag_pos.z - anchor_pos.z) ** 2)
        ts = build_timestamps(true_dist / C_M_PER_S,
                              self.params.reply_time_s, self.params.reply_time_s,
                              tag_device.xtal_drift_ppm, anchor.xtal_drift_ppm)
        distance = C_M_PER_S * dstwr_tof_ns(ts) * 1e-9 + self.params.bias_m
        for zone in self.params.nlos_zones:
            if point_in_polygon(tag_pos.x, tag_pos.y, zone.polygon):
                distance += zone.extra_bias_m
        if self.params.noise_sigma_m > 0:
            distance += self.rng.gauss(0.0, self.params.noise_sigma_m)
        distance = max(distance, 0.0)
        return RangeMeasurement(tag_id, anchor_id, exchange_index, distance, "ok", ts)
