from .scheduler import Future, Process, Scheduler, SimTimeout, Wait, sleep
from .clocks import ClockMap, ClockState, NodeClock
from .ntp import SyncClient, SyncConfig, SyncSample, ntp_exchange
from .deviations import CdfSummary, EdgeEvent, deviation_cdf, pairwise_deviations

__all__ = [
    "Future",
    "Process",
    "Scheduler",
    "SimTimeout",
    "Wait",
    "sleep",
    "ClockMap",
    "ClockState",
    "NodeClock",
    "SyncClient",
    "SyncConfig",
    "SyncSample",
    "ntp_exchange",
    "CdfSummary",
    "EdgeEvent",
    "deviation_cdf",
    "pairwise_deviations",
]
