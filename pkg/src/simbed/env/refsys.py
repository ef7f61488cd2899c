"""Optical reference system: near-ground-truth rigid-body poses.

Tracked bodies are registered with a provider returning their true pose;
samples add a small Gaussian residual per axis (3 sigma at the system's
accuracy figure). Streams publish samples on a topic at a fixed rate.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable

from .. import canonical
from ..bus import BEST_EFFORT, NodeHandle
from ..timing.clocks import NodeClock
from ..timing.scheduler import Scheduler
from .geometry import Pose3D


class UnknownBodyError(KeyError):
    pass


@dataclass
class RefSample:
    body_id: str
    pose: Pose3D
    timestamp_ns: int
    residual_m: tuple[float, float, float]


def pose_topic(body_id: str) -> str:
    return f"/refsys/{body_id}/pose"


class RefSystem:
    def __init__(self, sched: Scheduler, handle: NodeHandle, clock: NodeClock,
                 rng: random.Random, noise_sigma_m: float = 0.00005,
                 yaw_noise_sigma_deg: float = 0.005) -> None:
        self.sched = sched
        self.handle = handle
        self.clock = clock
        self.rng = rng
        self.noise_sigma_m = noise_sigma_m
        self.yaw_noise_sigma_deg = yaw_noise_sigma_deg
        self._bodies: dict[str, Callable[[], Pose3D]] = {}
        self._streams: dict[str, object] = {}

    def register_body(self, body_id: str, provider: Callable[[], Pose3D]) -> None:
        self._bodies[body_id] = provider

    def bodies(self) -> list[str]:
        return sorted(self._bodies)

    def true_pose(self, body_id: str) -> Pose3D:
        if body_id not in self._bodies:
            raise UnknownBodyError(body_id)
        return self._bodies[body_id]()

    def sample(self, body_id: str) -> RefSample:
        truth = self.true_pose(body_id)
        if self.noise_sigma_m > 0:
            residual = (self.rng.gauss(0.0, self.noise_sigma_m),
                        self.rng.gauss(0.0, self.noise_sigma_m),
                        self.rng.gauss(0.0, self.noise_sigma_m))
        else:
            residual = (0.0, 0.0, 0.0)
        yaw_noise = (self.rng.gauss(0.0, self.yaw_noise_sigma_deg)
                     if self.yaw_noise_sigma_deg > 0 else 0.0)
        pose = Pose3D(truth.x + residual[0], truth.y + residual[1],
                      truth.z + residual[2], truth.yaw_deg + yaw_noise)
        return RefSample(body_id, pose, self.clock.read_ns(), residual)

    def stream(self, body_id: str, rate_hz: float = 120.0) -> None:
        """Publish samples for one body on its pose topic at rate_hz."""
        if body_id not in self._bodies:
            raise UnknownBodyError(body_id)
        if body_id in self._streams:
            return
        topic = pose_topic(body_id)
        self.handle.advertise(topic)
        self._streams[body_id] = self.sched.spawn(self._stream_loop(body_id, topic, rate_hz))

    def _stream_loop(self, body_id: str, topic: str, rate_hz: float):
        period = 1.0 / rate_hz
        while True:
            s = self.sample(body_id)
            self.handle.publish(topic, canonical.dump_bytes({
                "body": body_id, "x": s.pose.x, "y": s.pose.y, "z": s.pose.z,
                "yaw_deg": s.pose.yaw_deg, "ts_ns": s.timestamp_ns,
            }), BEST_EFFORT)
            yield period
