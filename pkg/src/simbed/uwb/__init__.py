from .dstwr import C_M_PER_S, TwrTimestamps, build_timestamps, dstwr_tof_ns, tof_for_distance
from .channel import ChannelParams, NlosZone, RadioWorld, RangeMeasurement, point_in_polygon

__all__ = [
    "C_M_PER_S",
    "TwrTimestamps",
    "build_timestamps",
    "dstwr_tof_ns",
    "tof_for_distance",
    "ChannelParams",
    "NlosZone",
    "RadioWorld",
    "RangeMeasurement",
    "point_in_polygon",
]
