"""The message bus: node registry, topics, services and actions.

Topics follow publish-subscribe with per-subscription QoS; services are
blocking request/response with a timeout; actions are long-running goals
with an acceptance response, streamed feedback and exactly one terminal
result. Everything rides envelopes over the simulated transport, so lossy
and jittery links affect orchestration exactly where they would in a real
deployment.

QoS split: reliability and history_depth act on the publishing side,
deadline monitoring on the subscribing side against its local clock.
"""

from __future__ import annotations

import base64
import itertools
import logging
import random
from dataclasses import dataclass
from typing import Callable, Optional

from .. import canonical
from ..timing.clocks import ClockMap
from ..timing.scheduler import Future, Scheduler
from .transport import LinkTable, ReliableFlow, SimTransport
from .types import (
    BusError,
    DuplicateNodeError,
    Envelope,
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
)

log = logging.getLogger(__name__)

CANCEL_PAYLOAD = b"__cancel__"


class ActionFailed(Exception):
    """Raise inside an action runner to finish with status=failed."""

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


class ActionCanceled(Exception):
    """Raise inside an action runner to finish with status=canceled."""


@dataclass
class ActionResult:
    status: str  # succeeded | failed | canceled
    payload: bytes = b""
    error: str = ""


@dataclass
class BusStats:
    published: int = 0
    delivered: int = 0
    retransmits: int = 0
    buffer_drops: int = 0
    late_responses: int = 0
    deadline_misses: int = 0


@dataclass
class QosEvent:
    topic: str
    kind: str  # deadline_missed
    gap_ms: float
    at_true_s: float


class Subscription:
    """One node's subscription to a topic, with optional deadline watchdog.

    Without callbacks, payloads pile up in `received` (handy in tests);
    with an `on_msg` callback nothing is retained.
    """

    def __init__(self, bus: "MessageBus", node_id: str, topic: str, qos: QosProfile,
                 on_msg: Optional[Callable], on_qos_event: Optional[Callable]) -> None:
        self._bus = bus
        self.node_id = node_id
        self.topic = topic
        self.qos = qos
        self._on_msg = on_msg
        self._on_qos = on_qos_event
        self.received: list[bytes] = []
        self.envelopes: list[Envelope] = []
        self.qos_events: list[QosEvent] = []
        self.active = True
        self._deadline_timer = None
        self._last_local_s: Optional[float] = None
        if qos.deadline_ms is not None:
            self._last_local_s = bus.clocks.get(node_id).read_s()
            self._arm(qos.deadline_ms * 1e-3)

    # One miss per silence gap: the watchdog fires once, then waits for the
    # next delivery before re-arming.

    def _arm(self, delay_s: float) -> None:
        self._deadline_timer = self._bus.sched.after(delay_s, self._check_deadline)

    def _check_deadline(self) -> None:
        if not self.active:
            return
        deadline_s = self.qos.deadline_ms * 1e-3
        gap = self._bus.clocks.get(self.node_id).read_s() - self._last_local_s
        if gap >= deadline_s * (1.0 - 1e-9):
            self._deadline_timer = None
            event = QosEvent(self.topic, "deadline_missed", gap * 1e3, self._bus.sched.now())
            self._bus.stats.deadline_misses += 1
            if self._on_qos is not None:
                self._on_qos(event)
            else:
                self.qos_events.append(event)
        else:
            self._arm(deadline_s - gap)

    def _on_delivery(self, env: Envelope) -> None:
        if not self.active:
            return
        self._bus.stats.delivered += 1
        if self.qos.deadline_ms is not None:
            self._last_local_s = self._bus.clocks.get(self.node_id).read_s()
            if self._deadline_timer is not None:
                self._deadline_timer.cancel()
            self._arm(self.qos.deadline_ms * 1e-3)
        if self._on_msg is not None:
            self._on_msg(env.payload, env)
        else:
            self.received.append(env.payload)
            self.envelopes.append(env)

    def unsubscribe(self) -> None:
        self.active = False
        if self._deadline_timer is not None:
            self._deadline_timer.cancel()
            self._deadline_timer = None
        subs = self._bus._topic_subs.get(self.topic, [])
        if self in subs:
            subs.remove(self)


class ActionHandle:
    """Client-side view of one goal: acceptance, feedback, terminal result."""

    def __init__(self, bus: "MessageBus", name: str, corr: int, caller: str,
                 feedback_cb: Optional[Callable]) -> None:
        self._bus = bus
        self.name = name
        self.correlation_id = corr
        self.caller = caller
        self.accepted: Future = Future()
        self.result: Future = Future()  # resolves to ActionResult
        self.feedbacks: list[bytes] = []
        self._feedback_cb = feedback_cb

    def _on_feedback(self, payload: bytes) -> None:
        if self.result.done:
            return  # terminal result already seen; drop stragglers
        self.feedbacks.append(payload)
        if self._feedback_cb is not None:
            self._feedback_cb(payload)

    def cancel(self) -> None:
        self._bus._send_cancel(self)


class ActionContext:
    """Server-side goal context passed to the runner."""

    def __init__(self, bus: "MessageBus", server_id: str, caller: str, name: str, corr: int) -> None:
        self._bus = bus
        self.server_id = server_id
        self.caller = caller
        self.name = name
        self.correlation_id = corr
        self.cancel_requested = False

    def feedback(self, payload: bytes) -> None:
        self._bus._action_feedback(self, payload)


@dataclass
class _GoalState:
    ctx: ActionContext
    corr: int
    caller: str
    finished: bool = False


class NodeHandle:
    """A registered node's interface to the bus."""

    def __init__(self, bus: "MessageBus", info: NodeInfo) -> None:
        self._bus = bus
        self.info = info

    @property
    def node_id(self) -> str:
        return self.info.node_id

    def advertise(self, name: str) -> None:
        if name not in self.info.endpoints:
            self.info.endpoints.append(name)

    def publish(self, topic: str, payload: bytes, qos: QosProfile = QosProfile()) -> None:
        self._bus.publish(self.node_id, topic, payload, qos)

    def subscribe(self, topic: str, qos: QosProfile = QosProfile(),
                  on_msg: Optional[Callable] = None,
                  on_qos_event: Optional[Callable] = None) -> Subscription:
        return self._bus.subscribe(self.node_id, topic, qos, on_msg, on_qos_event)

    def serve(self, name: str, handler: Callable) -> None:
        self._bus.register_service(self.node_id, name, handler)
        self.advertise(name)

    def call(self, name: str, request: bytes, timeout_s: float = 5.0) -> Future:
        return self._bus.call_service(self.node_id, name, request, timeout_s)

    def action_server(self, name: str, runner: Callable, accept: Optional[Callable] = None) -> None:
        self._bus.register_action(self.node_id, name, runner, accept)
        self.advertise(name)

    def start_action(self, name: str, goal: bytes,
                     feedback_cb: Optional[Callable] = None) -> ActionHandle:
        return self._bus.start_action(self.node_id, name, goal, feedback_cb)

    def unregister(self) -> None:
        self._bus.unregister_node(self.node_id)


class MessageBus:
    def __init__(self, sched: Scheduler, clocks: ClockMap,
                 links: Optional[LinkTable] = None, seed: int | str = 0) -> None:
        self.sched = sched
        self.clocks = clocks
        self.links = links or LinkTable()
        self.transport = SimTransport(sched, self.links, random.Random(f"{seed}/transport"))
        self.stats = BusStats()
        self._nodes: dict[str, NodeInfo] = {}
        self._handles: dict[str, NodeHandle] = {}
        self._topic_subs: dict[str, list[Subscription]] = {}
        self._services: dict[str, tuple[str, Callable]] = {}
        self._actions: dict[str, tuple[str, Callable, Optional[Callable]]] = {}
        self._corr = itertools.count(1)
        self._pending_calls: dict[int, tuple[Future, object]] = {}
        self._goals: dict[int, _GoalState] = {}
        self._client_goals: dict[int, ActionHandle] = {}
        self._flows: dict[tuple[str, str, str], ReliableFlow] = {}

    # -- registry ------------------------------------------------------------

    def register_node(self, info: NodeInfo) -> NodeHandle:
        if info.node_id in self._nodes:
            raise DuplicateNodeError(f"node {info.node_id!r} already registered")
        self._nodes[info.node_id] = info
        handle = NodeHandle(self, info)
        self._handles[info.node_id] = handle
        if info.node_id not in self.clocks:
            self.clocks.add(info.node_id)
        return handle

    def unregister_node(self, node_id: str) -> None:
        if node_id not in self._nodes:
            raise UnknownNodeError(node_id)
        del self._nodes[node_id]
        self._handles.pop(node_id, None)
        for topic_subs in list(self._topic_subs.values()):
            for sub in [s for s in topic_subs if s.node_id == node_id]:
                sub.unsubscribe()
        for name in [n for n, (nid, _) in self._services.items() if nid == node_id]:
            del self._services[name]
        for name in [n for n, (nid, _, _) in self._actions.items() if nid == node_id]:
            del self._actions[name]
        for corr, goal in list(self._goals.items()):
            if goal.ctx.server_id == node_id and not goal.finished:
                goal.finished = True
                del self._goals[corr]
                self._finish_client_goal(corr, ActionResult("failed", b"", "connection_lost"))
        for key in [k for k in self._flows if k[0] == node_id or k[1] == node_id]:
            self._flows.pop(key).close()

    def discover(self, kind: Optional[NodeKind] = None) -> list[NodeInfo]:
        infos = [i for i in self._nodes.values() if kind is None or i.kind == kind]
        return sorted(infos, key=lambda i: i.node_id)

    def node(self, node_id: str) -> NodeInfo:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def handle(self, node_id: str) -> NodeHandle:
        if node_id not in self._handles:
            raise UnknownNodeError(node_id)
        return self._handles[node_id]

    # -- topics ----------------------------------------------------------------

    def publish(self, sender: str, topic: str, payload: bytes, qos: QosProfile) -> None:
        info = self.node(sender)
        if topic not in info.endpoints:
            raise NotAdvertisedError(f"{sender!r} does not advertise {topic!r}")
        self.stats.published += 1
        env = Envelope(MsgKind.TOPIC_MSG, topic, 0, sender, self.clocks.now_ns(sender), payload)
        targets = {s.node_id for s in self._topic_subs.get(topic, []) if s.active}
        for dst in sorted(targets):
            if qos.reliability is Reliability.RELIABLE:
                self._topic_flow(sender, dst, topic, qos.history_depth).send(env)
            else:
                self.transport.unicast(sender, dst, self._deliver_topic, topic, dst, env)

    def _deliver_topic(self, topic: str, dst: str, env: Envelope) -> None:
        for sub in list(self._topic_subs.get(topic, [])):
            if sub.node_id == dst and sub.active:
                sub._on_delivery(env)

    def subscribe(self, node_id: str, topic: str, qos: QosProfile,
                  on_msg: Optional[Callable] = None,
                  on_qos_event: Optional[Callable] = None) -> Subscription:
        if node_id not in self._nodes:
            raise UnknownNodeError(node_id)
        sub = Subscription(self, node_id, topic, qos, on_msg, on_qos_event)
        self._topic_subs.setdefault(topic, []).append(sub)
        return sub

    def _topic_flow(self, src: str, dst: str, topic: str, history_depth: int) -> ReliableFlow:
        key = (src, dst, topic)
        flow = self._flows.get(key)
        if flow is None or flow.closed:
            flow = ReliableFlow(
                self.sched, self.transport, src, dst, topic,
                lambda env: self._deliver_topic(topic, dst, env),
                history_depth=history_depth,
                on_retransmit=self._count_retransmit, on_drop=self._count_drop)
            self._flows[key] = flow
        return flow

    def _count_retransmit(self) -> None:
        self.stats.retransmits += 1

    def _count_drop(self) -> None:
        self.stats.buffer_drops += 1

    # -- services ----------------------------------------------------------------

    def register_service(self, node_id: str, name: str, handler: Callable) -> None:
        if name in self._services:
            raise BusError(f"service {name!r} already registered")
        self._services[name] = (node_id, handler)

    def call_service(self, caller: str, name: str, request: bytes,
                     timeout_s: float = 5.0) -> Future:
        if name not in self._services:
            raise UnknownServiceError(name)
        provider_id, _ = self._services[name]
        corr = next(self._corr)
        fut = Future()
        timer = self.sched.after(timeout_s, self._call_timeout, corr)
        self._pending_calls[corr] = (fut, timer)
        env = Envelope(MsgKind.SVC_REQ, name, corr, caller, self.clocks.now_ns(caller), request)
        self._ctrl_flow(caller, provider_id).send(env)
        return fut

    def _call_timeout(self, corr: int) -> None:
        entry = self._pending_calls.pop(corr, None)
        if entry is not None:
            entry[0].set_exception(ServiceTimeout(f"service call {corr} timed out"))

    def _ctrl_flow(self, src: str, dst: str) -> ReliableFlow:
        """Reliable in-order stream for service/action envelopes per node pair."""
        key = (src, dst, "__ctrl__")
        flow = self._flows.get(key)
        if flow is None or flow.closed:
            flow = ReliableFlow(self.sched, self.transport, src, dst, "__ctrl__",
                                self._on_ctrl_delivery, history_depth=1000,
                                on_retransmit=self._count_retransmit,
                                on_drop=self._count_drop)
            self._flows[key] = flow
        return flow

    def _on_ctrl_delivery(self, env: Envelope) -> None:
        if env.kind is MsgKind.SVC_REQ:
            self._handle_svc_req(env)
        elif env.kind is MsgKind.SVC_RESP:
            self._handle_svc_resp(env)
        elif env.kind is MsgKind.ACTION_GOAL:
            self._handle_action_goal(env)
        elif env.kind is MsgKind.ACTION_FEEDBACK:
            handle = self._client_goals.get(env.correlation_id)
            if handle is not None:
                handle._on_feedback(env.payload)
        elif env.kind is MsgKind.ACTION_RESULT:
            self._handle_action_result(env)

    def _handle_svc_req(self, env: Envelope) -> None:
        entry = self._services.get(env.name)
        if entry is None:
            return  # provider vanished in flight; caller times out
        provider_id, handler = entry
        out = handler(env.payload)
        if hasattr(out, "__next__"):
            proc = self.sched.spawn(out)
            proc.result.add_done_callback(
                lambda fut: self._respond(provider_id, env, fut.result()))
        else:
            self._respond(provider_id, env, out)

    def _respond(self, provider_id: str, req_env: Envelope, response: bytes) -> None:
        resp = Envelope(MsgKind.SVC_RESP, req_env.name, req_env.correlation_id,
                        provider_id, self.clocks.now_ns(provider_id), response or b"")
        self._ctrl_flow(provider_id, req_env.sender).send(resp)

    def _handle_svc_resp(self, env: Envelope) -> None:
        entry = self._pending_calls.pop(env.correlation_id, None)
        if entry is not None:
            fut, timer = entry
            timer.cancel()
            fut.set_result(env.payload)
            return
        handle = self._client_goals.get(env.correlation_id)
        if handle is not None:
            if not handle.accepted.done:
                obj = canonical.loads(env.payload)
                handle.accepted.set_result(bool(obj.get("accepted", False)))
            return
        self.stats.late_responses += 1

    # -- actions -------------------------------------------------------------------

    def register_action(self, node_id: str, name: str, runner: Callable,
                        accept: Optional[Callable] = None) -> None:
        if name in self._actions:
            raise BusError(f"action {name!r} already registered")
        self._actions[name] = (node_id, runner, accept)

    def start_action(self, caller: str, name: str, goal: bytes,
                     feedback_cb: Optional[Callable] = None) -> ActionHandle:
        if name not in self._actions:
            raise UnknownActionError(name)
        server_id, _, _ = self._actions[name]
        corr = next(self._corr)
        handle = ActionHandle(self, name, corr, caller, feedback_cb)
        self._client_goals[corr] = handle
        env = Envelope(MsgKind.ACTION_GOAL, name, corr, caller, self.clocks.now_ns(caller), goal)
        self._ctrl_flow(caller, server_id).send(env)
        return handle

    def _send_cancel(self, handle: ActionHandle) -> None:
        entry = self._actions.get(handle.name)
        if entry is None:
            return
        env = Envelope(MsgKind.ACTION_GOAL, handle.name, handle.correlation_id,
                       handle.caller, self.clocks.now_ns(handle.caller), CANCEL_PAYLOAD)
        self._ctrl_flow(handle.caller, entry[0]).send(env)

    def _handle_action_goal(self, env: Envelope) -> None:
        if env.payload == CANCEL_PAYLOAD and env.correlation_id in self._goals:
            self._goals[env.correlation_id].ctx.cancel_requested = True
            return
        entry = self._actions.get(env.name)
        if entry is None:
            return
        server_id, runner, accept = entry
        if accept is not None:
            verdict = accept(env.payload)
            ok, reason = verdict if isinstance(verdict, tuple) else (bool(verdict), "rejected")
            if not ok:
                self._respond(server_id, env,
                              canonical.dump_bytes({"accepted": False, "reason": reason}))
                self._send_result(server_id, env.sender, env.correlation_id,
                                  ActionResult("failed", b"", reason))
                return
        self._respond(server_id, env, canonical.dump_bytes({"accepted": True, "reason": ""}))
        ctx = ActionContext(self, server_id, env.sender, env.name, env.correlation_id)
        state = _GoalState(ctx, env.correlation_id, env.sender)
        self._goals[env.correlation_id] = state
        proc = self.sched.spawn(runner(env.payload, ctx))
        proc.result.add_done_callback(lambda fut: self._goal_finished(state, fut))

    def _goal_finished(self, state: _GoalState, fut: Future) -> None:
        if state.finished:
            return
        state.finished = True
        self._goals.pop(state.corr, None)
        exc = fut.exception()
        if exc is None:
            payload = fut.result()
            result = ActionResult("succeeded", payload if isinstance(payload, bytes) else b"")
        elif isinstance(exc, ActionCanceled):
            result = ActionResult("canceled", b"", str(exc) or "canceled")
        elif isinstance(exc, ActionFailed):
            result = ActionResult("failed", b"", exc.reason)
        else:
            result = ActionResult("failed", b"", f"{type(exc).__name__}: {exc}")
        self._send_result(state.ctx.server_id, state.caller, state.corr, result)

    def _send_result(self, server_id: str, caller: str, corr: int, result: ActionResult) -> None:
        body = canonical.dump_bytes({
            "status": result.status,
            "error": result.error,
            "data_b64": base64.b64encode(result.payload).decode("ascii"),
        })
        env = Envelope(MsgKind.ACTION_RESULT, "", corr, server_id,
                       self.clocks.now_ns(server_id), body)
        self._ctrl_flow(server_id, caller).send(env)

    def _handle_action_result(self, env: Envelope) -> None:
        obj = canonical.loads(env.payload)
        result = ActionResult(obj["status"], base64.b64decode(obj["data_b64"]), obj["error"])
        self._finish_client_goal(env.correlation_id, result)

    def _finish_client_goal(self, corr: int, result: ActionResult) -> None:
        handle = self._client_goals.pop(corr, None)
        if handle is None or handle.result.done:
            return
        if not handle.accepted.done:
            handle.accepted.set_result(result.status == "succeeded" or result.status == "canceled")
        handle.result.set_result(result)

    def _action_feedback(self, ctx: ActionContext, payload: bytes) -> None:
        state = self._goals.get(ctx.correlation_id)
        if state is None or state.finished:
            return
        env = Envelope(MsgKind.ACTION_FEEDBACK, ctx.name, ctx.correlation_id,
                       ctx.server_id, self.clocks.now_ns(ctx.server_id), payload)
        self._ctrl_flow(ctx.server_id, ctx.caller).send(env)
