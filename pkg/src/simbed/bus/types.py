"""Domain types and errors for the message bus."""

from __future__ import annotations

import base64
import enum
import random
import struct
from dataclasses import dataclass, field
from typing import Optional

from .. import canonical


class NodeKind(str, enum.Enum):
    CENTRAL = "central"
    DUT = "dut"
    AGV = "agv"
    REFSYS = "refsys"


class MsgKind(str, enum.Enum):
    TOPIC_MSG = "topic_msg"
    SVC_REQ = "svc_req"
    SVC_RESP = "svc_resp"
    ACTION_GOAL = "action_goal"
    ACTION_FEEDBACK = "action_feedback"
    ACTION_RESULT = "action_result"


class Reliability(str, enum.Enum):
    RELIABLE = "reliable"
    BEST_EFFORT = "best_effort"


class BusError(Exception):
    pass


class DuplicateNodeError(BusError):
    pass


class UnknownNodeError(BusError):
    pass


class UnknownServiceError(BusError):
    pass


class UnknownActionError(BusError):
    pass


class NotAdvertisedError(BusError):
    pass


class ServiceTimeout(BusError):
    pass


@dataclass
class NodeInfo:
    node_id: str
    kind: NodeKind
    endpoints: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class QosProfile:
    reliability: Reliability = Reliability.RELIABLE
    deadline_ms: Optional[float] = None
    history_depth: int = 100

    def __post_init__(self) -> None:
        if self.deadline_ms is not None and self.deadline_ms <= 0:
            raise ValueError("deadline must be > 0 when present")
        if self.history_depth < 1:
            raise ValueError("history_depth must be >= 1")


RELIABLE = QosProfile(Reliability.RELIABLE)
BEST_EFFORT = QosProfile(Reliability.BEST_EFFORT)


@dataclass
class LinkModel:
    """One network hop: mean latency, jitter, loss, and asymmetry.

    `asymmetry_ms` is forward minus backward one-way delay; half is added
    to the forward direction and subtracted from the backward one.
    """

    latency_mean_ms: float = 0.3
    latency_jitter_sigma_ms: float = 0.0
    loss_prob: float = 0.0
    asymmetry_ms: float = 0.0

    def __post_init__(self) -> None:
        if self.latency_mean_ms < 0:
            raise ValueError("latency_mean must be >= 0")
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must be in [0,1]")

    def draw_delay_s(self, rng: random.Random, forward: bool) -> float:
        mean = self.latency_mean_ms + (0.5 if forward else -0.5) * self.asymmetry_ms
        delay = mean
        if self.latency_jitter_sigma_ms > 0:
            delay += rng.gauss(0.0, self.latency_jitter_sigma_ms)
        return max(delay, 0.0) * 1e-3

    def draw_lost(self, rng: random.Random) -> bool:
        return self.loss_prob > 0 and rng.random() < self.loss_prob


@dataclass
class Envelope:
    kind: MsgKind
    name: str
    correlation_id: int
    sender: str
    send_ts: int  # nanoseconds on the sender's clock
    payload: bytes

    def __post_init__(self) -> None:
        if self.kind is not MsgKind.TOPIC_MSG and self.correlation_id == 0:
            raise ValueError("correlation_id must be nonzero for svc/action envelopes")


# -- wire framing (TCP transport) ------------------------------------------
#
# Frame: [len: u32 BE][envelope as canonical structured text]; the binary
# payload travels base64-encoded inside the text.

def encode_envelope(env: Envelope) -> bytes:
    body = canonical.dump_bytes(
        {
            "kind": env.kind.value,
            "name": env.name,
            "correlation_id": env.correlation_id,
            "sender": env.sender,
            "send_ts": env.send_ts,
            "payload_b64": base64.b64encode(env.payload).decode("ascii"),
        }
    )
    return struct.pack(">I", len(body)) + body


def decode_envelope(frame_body: bytes) -> Envelope:
    obj = canonical.loads(frame_body)
    return Envelope(
        kind=MsgKind(obj["kind"]),
        name=obj["name"],
        correlation_id=int(obj["correlation_id"]),
        sender=obj["sender"],
        send_ts=int(obj["send_ts"]),
        payload=base64.b64decode(obj["payload_b64"]),
    )
