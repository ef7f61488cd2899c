from .types import (
    BEST_EFFORT,
    RELIABLE,
    BusError,
    DuplicateNodeError,
    Envelope,
    LinkModel,
    MsgKind,
    NodeInfo,
    NodeKind,
    NotAdvertisedError,
    QosProfile,
    Reliability,
    ServiceTimeout,
    UnknownActionError,
    UnknownNodeError,
    UnknownServiceError,
    decode_envelope,
    encode_envelope,
)
from .core import (
    ActionCanceled,
    ActionContext,
    ActionFailed,
    ActionHandle,
    ActionResult,
    MessageBus,
    NodeHandle,
    QosEvent,
    Subscription,
)
from .transport import LinkTable, ReliableFlow, SimTransport

__all__ = [
    "BEST_EFFORT",
    "RELIABLE",
    "BusError",
    "DuplicateNodeError",
    "Envelope",
    "LinkModel",
    "MsgKind",
    "NodeInfo",
    "NodeKind",
    "NotAdvertisedError",
    "QosProfile",
    "Reliability",
    "ServiceTimeout",
    "UnknownActionError",
    "UnknownNodeError",
    "UnknownServiceError",
    "decode_envelope",
    "encode_envelope",
    "ActionCanceled",
    "ActionContext",
    "ActionFailed",
    "ActionHandle",
    "ActionResult",
    "MessageBus",
    "NodeHandle",
    "QosEvent",
    "Subscription",
    "LinkTable",
    "ReliableFlow",
    "SimTransport",
]
