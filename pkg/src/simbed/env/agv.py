"""Differential-drive AGV: kinematics, PID waypoint control, goto action.

The controller uses the reference system as its position input and drives
until the measured pose stays inside the arrival thresholds for the hold
time. Actuator noise scales with the commanded motion, so a holding robot
stands still. Odometry is dead-reckoned from the commands and published
separately from the reference-system truth.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .. import canonical
from ..bus import BEST_EFFORT, ActionCanceled, ActionContext, ActionFailed, NodeHandle
from ..timing.scheduler import Scheduler
from .geometry import Pose2D, Pose3D, wrap_deg


@dataclass
class AgvState:
    pose: Pose2D = field(default_factory=Pose2D)
    v: float = 0.0
    omega_deg: float = 0.0
    v_max: float = 0.1
    omega_max_deg: float = 45.0
    pos_noise_sigma_m: float = 0.0002  # per step at full linear speed
    yaw_noise_sigma_deg: float = 0.02  # per step at full angular speed


@dataclass
class PidGains:
    kp_lin: float = 0.8
    ki_lin: float = 0.05
    kd_lin: float = 0.1
    kp_ang: float = 2.0
    ki_ang: float = 0.0
    kd_ang: float = 0.2
    arrival_pos_thresh_m: float = 0.005
    arrival_yaw_thresh_deg: float = 0.3
    hold_time_s: float = 0.5

    def __post_init__(self) -> None:
        if self.arrival_pos_thresh_m <= 0 or self.arrival_yaw_thresh_deg <= 0:
            raise ValueError("arrival thresholds must be > 0")


@dataclass
class PidState:
    int_lin: float = 0.0
    prev_lin: Optional[float] = None
    int_ang: float = 0.0
    prev_ang: Optional[float] = None


def _pid_axis(kp: float, ki: float, kd: float, err: float, dt: float,
              integral: float, prev: Optional[float], limit: float) -> tuple[float, float]:
    derivative = 0.0 if prev is None else (err - prev) / dt
    unsat = kp * err + ki * integral + kd * derivative
    out = max(-limit, min(limit, unsat))
    if out == unsat or unsat * err < 0:  # anti-windup: freeze integral at saturation
        integral += err * dt
    return out, integral


def pid_update(gains: PidGains, pos_err_m: float, yaw_err_deg: float, dt: float,
               state: PidState, v_max: float = 0.1,
               omega_max_deg: float = 45.0) -> tuple[float, float]:
    """Per-axis PID: linear command toward the target, angular on yaw error."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v, state.int_lin = _pid_axis(gains.kp_lin, gains.ki_lin, gains.kd_lin,
                                 pos_err_m, dt, state.int_lin, state.prev_lin, v_max)
    omega, state.int_ang = _pid_axis(gains.kp_ang, gains.ki_ang, gains.kd_ang,
                                     yaw_err_deg, dt, state.int_ang, state.prev_ang,
                                     omega_max_deg)
    state.prev_lin = pos_err_m
    state.prev_ang = yaw_err_deg
    return v, omega


def agv_step(state: AgvState, v_cmd: float, omega_cmd_deg: float, dt: float,
             rng: Optional[random.Random] = None,
             bounds: Optional[tuple[float, float, float, float]] = None) -> AgvState:
    """Advance the kinematics one step; clamps commands, applies noise."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = max(-state.v_max, min(state.v_max, v_cmd))  # |v| <= v_max at all times
    omega = omega_cmd_deg  # angular rate is limited by the controller, not here
    yaw_rad = math.radians(state.pose.yaw_deg)
    x = state.pose.x + v * math.cos(yaw_rad) * dt
    y = state.pose.y + v * math.sin(yaw_rad) * dt
    yaw = state.pose.yaw_deg + omega * dt
    if rng is not None and state.pos_noise_sigma_m > 0 and v != 0.0:
        scale = abs(v) / state.v_max
        x += rng.gauss(0.0, state.pos_noise_sigma_m * scale)
        y += rng.gauss(0.0, state.pos_noise_sigma_m * scale)
    if rng is not None and state.yaw_noise_sigma_deg > 0 and omega != 0.0:
        yaw += rng.gauss(0.0, state.yaw_noise_sigma_deg * abs(omega) / state.omega_max_deg)
    if bounds is not None:
        x = max(bounds[0], min(bounds[1], x))
        y = max(bounds[2], min(bounds[3], y))
    return replace(state, pose=Pose2D(x, y, wrap_deg(yaw)), v=v, omega_deg=omega)


GOTO_ACTION = "/agv/goto"
ODOM_TOPIC = "/agv/odom"


class AgvAgent:
    """The AGV node: control loop, goto action server, odometry topic."""

    def __init__(self, sched: Scheduler, handle: NodeHandle, refsys, body_id: str,
                 rng: random.Random, state: Optional[AgvState] = None,
                 gains: Optional[PidGains] = None, dt_s: float = 0.01,
                 arena: tuple[float, float, float, float] = (0.0, 6.0, 0.0, 6.0),
                 goal_timeout_s: float = 120.0, marker_height_m: float = 0.25,
                 odom_rate_hz: float = 0.0) -> None:
        self.sched = sched
        self.handle = handle
        self.refsys = refsys
        self.body_id = body_id
        self.rng = rng
        self.state = state or AgvState()
        self.gains = gains or PidGains()
        self.dt_s = dt_s
        self.arena = arena
        self.goal_timeout_s = goal_timeout_s
        self.marker_height_m = marker_height_m
        self._odom_pose = Pose2D(self.state.pose.x, self.state.pose.y, self.state.pose.yaw_deg)
        self._goal_active = False
        handle.advertise(ODOM_TOPIC)
        handle.action_server(GOTO_ACTION, self._run_goto, accept=self._accept_goto)
        refsys.register_body(body_id, self.true_pose_3d)
        if odom_rate_hz > 0:
            sched.spawn(self._odom_publisher(odom_rate_hz))

    # -- state ---------------------------------------------------------------

    def true_pose_3d(self) -> Pose3D:
        p = self.state.pose
        return Pose3D(p.x, p.y, self.marker_height_m, p.yaw_deg)

    @property
    def odom_pose(self) -> Pose2D:
        return self._odom_pose

    def _integrate_odom(self, v: float, omega: float) -> None:
        yaw_rad = math.radians(self._odom_pose.yaw_deg)
        self._odom_pose = Pose2D(
            self._odom_pose.x + v * math.cos(yaw_rad) * self.dt_s,
            self._odom_pose.y + v * math.sin(yaw_rad) * self.dt_s,
            wrap_deg(self._odom_pose.yaw_deg + omega * self.dt_s),
        )

    def _odom_publisher(self, rate_hz: float):
        period = 1.0 / rate_hz
        while True:
            p = self._odom_pose
            self.handle.publish(ODOM_TOPIC, canonical.dump_bytes(
                {"x": p.x, "y": p.y, "yaw_deg": p.yaw_deg}), BEST_EFFORT)
            yield period

    # -- goto action -----------------------------------------------------------

    def _accept_goto(self, goal: bytes):
        if self._goal_active:
            return (False, "goal_active")
        try:
            body = canonical.loads(goal)
            float(body["x"]), float(body["y"]), float(body["yaw"])
        except Exception:  # noqa: BLE001 - malformed goal
            return (False, "malformed_goal")
        return (True, "")

    def _run_goto(self, goal: bytes, ctx: ActionContext):
        body = canonical.loads(goal)
        target = Pose2D(float(body["x"]), float(body["y"]), float(body["yaw"]))
        self._goal_active = True
        try:
            final = yield from self._goto_loop(target, ctx)
        finally:
            self._goal_active = False
        return canonical.dump_bytes(final)

    def _goto_loop(self, target: Pose2D, ctx: ActionContext):
        pid = PidState()
        g = self.gains
        pos_deadband = 0.6 * g.arrival_pos_thresh_m
        yaw_deadband = 0.6 * g.arrival_yaw_thresh_deg
        hold_started: Optional[float] = None
        started = self.sched.now()
        last_feedback = started
        while True:
            if ctx.cancel_requested:
                raise ActionCanceled("goto canceled")
            if self.sched.now() - started > self.goal_timeout_s:
                raise ActionFailed("timeout:" + canonical.dumps(self._measured_dict()))
            measured = self.refsys.sample(self.body_id).pose
            mpose = Pose2D(measured.x, measured.y, measured.yaw_deg)
            dist = mpose.distance_to(target)
            final_yaw_err = wrap_deg(target.yaw_deg - mpose.yaw_deg)

            if dist > pos_deadband:
                heading_err = wrap_deg(mpose.bearing_to_deg(target) - mpose.yaw_deg)
                v_cmd, w_cmd = pid_update(g, dist, heading_err, self.dt_s, pid,
                                          self.state.v_max, self.state.omega_max_deg)
                v_cmd = 0.0 if abs(heading_err) > 45.0 else v_cmd * max(
                    0.0, math.cos(math.radians(heading_err)))
            elif abs(final_yaw_err) > yaw_deadband:
                _, w_cmd = pid_update(g, 0.0, final_yaw_err, self.dt_s, pid,
                                      self.state.v_max, self.state.omega_max_deg)
                v_cmd = 0.0
            else:
                v_cmd, w_cmd = 0.0, 0.0

            self.state = agv_step(self.state, v_cmd, w_cmd, self.dt_s, self.rng, self.arena)
            self._integrate_odom(self.state.v, self.state.omega_deg)

            within = (dist <= g.arrival_pos_thresh_m
                      and abs(final_yaw_err) <= g.arrival_yaw_thresh_deg)
            if within:
                if hold_started is None:
                    hold_started = self.sched.now()
                elif self.sched.now() - hold_started >= g.hold_time_s:
                    return self._measured_dict()
            else:
                hold_started = None

            if self.sched.now() - last_feedback >= 1.0:
                last_feedback = self.sched.now()
                ctx.feedback(canonical.dump_bytes(self._measured_dict()))
            yield self.dt_s

    def _measured_dict(self) -> dict:
        sample = self.refsys.sample(self.body_id)
        return {"x": sample.pose.x, "y": sample.pose.y, "yaw_deg": sample.pose.yaw_deg}
