"""Double-sided two-way ranging: timestamps and time-of-flight estimator.

Four durations are measured, two per side: the tag times round 1 and
reply 2, the anchor times reply 1 and round 2. Each side measures on its
own crystal, so durations are scaled by that clock's rate. The estimator

    tof = (t_round1 * t_round2 - t_reply1 * t_reply2)
          / (t_round1 + t_reply1 + t_round2 + t_reply2)

cancels the reply-time-proportional error of single-sided ranging; what
remains is proportional to the time of flight itself (sub-millimeter at
crystal-grade drift).

Durations are built in the duration domain (never as differences of large
absolute timestamps) so the zero-noise path is exact to double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

C_M_PER_S = 299_792_458.0  # speed of light, exact


@dataclass
class TwrTimestamps:
    t_round1_ns: float  # tag: poll tx -> response rx
    t_reply1_ns: float  # anchor: poll rx -> response tx
    t_round2_ns: float  # anchor: response tx -> final rx
    t_reply2_ns: float  # tag: response rx -> final tx

    def validate(self) -> None:
        values = (self.t_round1_ns, self.t_reply1_ns, self.t_round2_ns, self.t_reply2_ns)
        if any(v <= 0 for v in values):
            raise ValueError("timestamps must be positive")
        if self.t_round1_ns < self.t_reply1_ns or self.t_round2_ns < self.t_reply2_ns:
            raise ValueError("round times cannot be shorter than reply times")


def dstwr_tof_ns(ts: TwrTimestamps) -> float:
    """Estimated time of flight in nanoseconds."""
    ts.validate()
    denominator = ts.t_round1_ns + ts.t_reply1_ns + ts.t_round2_ns + ts.t_reply2_ns
    if denominator <= 0:
        raise ValueError("non-positive denominator")
    numerator = ts.t_round1_ns * ts.t_round2_ns - ts.t_reply1_ns * ts.t_reply2_ns
    return numerator / denominator


def build_timestamps(tof_s: float, reply1_s: float, reply2_s: float,
                     tag_drift_ppm: float = 0.0,
                     anchor_drift_ppm: float = 0.0) -> TwrTimestamps:
    """Exact measured durations for a true tof and true reply times.

    True durations: round1 = 2 tof + reply1, round2 = 2 tof + reply2.
    The tag's clock rate scales (round1, reply2); the anchor's scales
    (reply1, round2).
    """
    k_tag = 1.0 + tag_drift_ppm * 1e-6
    k_anchor = 1.0 + anchor_drift_ppm * 1e-6
    round1 = 2.0 * tof_s + reply1_s
    round2 = 2.0 * tof_s + reply2_s
    return TwrTimestamps(
        t_round1_ns=round1 * k_tag * 1e9,
        t_reply1_ns=reply1_s * k_anchor * 1e9,
        t_round2_ns=round2 * k_anchor * 1e9,
        t_reply2_ns=reply2_s * k_tag * 1e9,
    )


def tof_for_distance(distance_m: float) -> float:
    return distance_m / C_M_PER_S
