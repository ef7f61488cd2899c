from .geometry import Pose2D, Pose3D, wrap_deg
from .agv import GOTO_ACTION, ODOM_TOPIC, AgvAgent, AgvState, PidGains, PidState, agv_step, pid_update
from .refsys import RefSample, RefSystem, UnknownBodyError, pose_topic

__all__ = [
    "Pose2D",
    "Pose3D",
    "wrap_deg",
    "GOTO_ACTION",
    "ODOM_TOPIC",
    "AgvAgent",
    "AgvState",
    "PidGains",
    "PidState",
    "agv_step",
    "pid_update",
    "RefSample",
    "RefSystem",
    "UnknownBodyError",
    "pose_topic",
]
