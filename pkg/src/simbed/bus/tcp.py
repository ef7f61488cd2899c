"""TCP transport: remote processes join the central bus over sockets.

The coordinator hosts a hub; each remote process connects one socket and
tunnels envelopes through it using the length-prefixed frame format. The
hub proxies the remote node onto the in-process bus, so local and remote
nodes interoperate. Reserved service names (``__hub__/...``) carry the
small control vocabulary (register, advertise, subscribe).

TCP itself is ordered and lossless, so no ack layer runs on top; QoS
reliability only selects the simulated-link behavior, deadline monitoring
still applies hub-side.
"""

from __future__ import annotations

import itertools
import logging
import socket
import struct
import threading
from concurrent.futures import Future as ThreadFuture
from typing import Callable, Optional

from .. import canonical
from ..timing.scheduler import Future, Wait
from .core import ActionResult, MessageBus
from .types import Envelope, MsgKind, NodeInfo, NodeKind, QosProfile, Reliability, decode_envelope, encode_envelope

log = logging.getLogger(__name__)

REG = "__hub__/register"
ADVERTISE = "__hub__/advertise"
SUBSCRIBE = "__hub__/subscribe"


def _shutdown_close(sock: socket.socket) -> None:
    # shutdown first: close() alone does not wake a thread blocked in recv
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    try:
        sock.close()
    except OSError:
        pass


def read_frame(sock: socket.socket) -> Optional[bytes]:
    header = _read_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    return _read_exact(sock, length)


def _read_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = b""
    while len(buf) < n:
        try:
            chunk = sock.recv(n - len(buf))
        except OSError:
            return None
        if not chunk:
            return None
        buf += chunk
    return buf


def _qos_from_obj(obj: dict) -> QosProfile:
    return QosProfile(
        reliability=Reliability(obj.get("reliability", "reliable")),
        deadline_ms=obj.get("deadline_ms"),
        history_depth=int(obj.get("history_depth", 100)),
    )


class _HubConn:
    """Hub-side state for one remote socket."""

    def __init__(self, hub: "TcpHub", sock: socket.socket) -> None:
        self.hub = hub
        self.sock = sock
        self.node_id: Optional[str] = None
        self.handle = None
        self.topic_qos: dict[str, QosProfile] = {}
        self.pending: dict[int, Future] = {}
        self._corr = itertools.count(1)
        self._write_lock = threading.Lock()

    def send_env(self, env: Envelope) -> None:
        try:
            with self._write_lock:
                self.sock.sendall(encode_envelope(env))
        except OSError:
            pass  # reader thread will observe the close

    def reply(self, req: Envelope, payload: dict) -> None:
        self.send_env(Envelope(MsgKind.SVC_RESP, req.name, req.correlation_id,
                               "__hub__", 0, canonical.dump_bytes(payload)))


class TcpHub:
    """Accepts remote bus members and proxies them onto the local bus."""

    def __init__(self, bus: MessageBus, host: str = "127.0.0.1", port: int = 0) -> None:
        self.bus = bus
        self._server = socket.create_server((host, port))
        self.port = self._server.getsockname()[1]
        self._threads: list[threading.Thread] = []
        self._conns: list[_HubConn] = []
        self._closing = False
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def close(self) -> None:
        self._closing = True
        try:
            self._server.close()
        except OSError:
            pass
        for conn in list(self._conns):
            _shutdown_close(conn.sock)

    def _accept_loop(self) -> None:
        while not self._closing:
            try:
                sock, _addr = self._server.accept()
            except OSError:
                return
            conn = _HubConn(self, sock)
            self._conns.append(conn)
            thread = threading.Thread(target=self._conn_loop, args=(conn,), daemon=True)
            self._threads.append(thread)
            thread.start()

    def _conn_loop(self, conn: _HubConn) -> None:
        while True:
            frame = read_frame(conn.sock)
            if frame is None:
                break
            try:
                env = decode_envelope(frame)
            except Exception:  # noqa: BLE001 - malformed remote frame
                log.warning("dropping malformed frame from %s", conn.node_id)
                continue
            self.bus.sched.call_threadsafe(self._dispatch, conn, env)
        self.bus.sched.call_threadsafe(self._disconnect, conn)

    # Everything below runs on the scheduler thread.

    def _disconnect(self, conn: _HubConn) -> None:
        if conn in self._conns:
            self._conns.remove(conn)
        if conn.node_id is not None and conn.node_id in [i.node_id for i in self.bus.discover()]:
            self.bus.unregister_node(conn.node_id)

    def _dispatch(self, conn: _HubConn, env: Envelope) -> None:
        if env.kind is MsgKind.SVC_REQ and env.name.startswith("__hub__/"):
            self._control(conn, env)
        elif conn.node_id is None:
            conn.reply(env, {"ok": False, "error": "not registered"})
        elif env.kind is MsgKind.TOPIC_MSG:
            qos = conn.topic_qos.get(env.name, QosProfile())
            self.bus.publish(conn.node_id, env.name, env.payload, qos)
        elif env.kind is MsgKind.SVC_REQ:
            self._remote_call(conn, env)
        elif env.kind is MsgKind.SVC_RESP:
            fut = conn.pending.pop(env.correlation_id, None)
            if fut is not None and not fut.done:
                fut.set_result(env.payload)
        elif env.kind is MsgKind.ACTION_GOAL:
            self._remote_goal(conn, env)

    def _control(self, conn: _HubConn, env: Envelope) -> None:
        body = canonical.loads(env.payload) if env.payload else {}
        if env.name == REG:
            try:
                info = NodeInfo(body["node_id"], NodeKind(body["kind"]), [])
                conn.handle = self.bus.register_node(info)
                conn.node_id = info.node_id
                conn.reply(env, {"ok": True})
            except Exception as exc:  # noqa: BLE001 - surfaced to the remote
                conn.reply(env, {"ok": False, "error": str(exc)})
        elif env.name == ADVERTISE:
            conn.handle.advertise(body["name"])
            conn.topic_qos[body["name"]] = _qos_from_obj(body.get("qos", {}))
            if body.get("service"):
                self.bus.register_service(conn.node_id, body["name"],
                                          self._make_remote_service(conn, body["name"]))
            conn.reply(env, {"ok": True})
        elif env.name == SUBSCRIBE:
            qos = _qos_from_obj(body.get("qos", {}))
            self.bus.subscribe(conn.node_id, body["topic"], qos,
                               on_msg=lambda payload, msg_env: conn.send_env(msg_env))
            conn.reply(env, {"ok": True})
        else:
            conn.reply(env, {"ok": False, "error": f"unknown control {env.name}"})

    def _make_remote_service(self, conn: _HubConn, name: str) -> Callable:
        def handler(payload: bytes):
            corr = next(conn._corr)
            fut = Future()
            conn.pending[corr] = fut
            conn.send_env(Envelope(MsgKind.SVC_REQ, name, corr, "__hub__", 0, payload))

            def waiter():
                resp = yield Wait(fut, timeout=30.0)
                return resp

            return waiter()

        return handler

    def _remote_call(self, conn: _HubConn, env: Envelope) -> None:
        try:
            fut = self.bus.call_service(conn.node_id, env.name, env.payload, timeout_s=10.0)
        except Exception as exc:  # noqa: BLE001 - surfaced to the remote
            conn.reply(env, {"ok": False, "error": str(exc)})
            return

        def on_done(f: Future) -> None:
            if f.exception() is not None:
                conn.reply(env, {"ok": False, "error": str(f.exception())})
            else:
                conn.reply(env, {"ok": True, "data_b64": _b64(f.result())})

        fut.add_done_callback(on_done)

    def _remote_goal(self, conn: _HubConn, env: Envelope) -> None:
        try:
            handle = self.bus.start_action(
                conn.node_id, env.name, env.payload,
                feedback_cb=lambda payload: conn.send_env(
                    Envelope(MsgKind.ACTION_FEEDBACK, env.name, env.correlation_id,
                             "__hub__", 0, payload)))
        except Exception as exc:  # noqa: BLE001
            conn.reply(env, {"ok": False, "error": str(exc)})
            return
        conn.reply(env, {"ok": True})

        def on_result(f: Future) -> None:
            result: ActionResult = f.result()
            conn.send_env(Envelope(
                MsgKind.ACTION_RESULT, env.name, env.correlation_id, "__hub__", 0,
                canonical.dump_bytes({"status": result.status, "error": result.error,
                                      "data_b64": _b64(result.payload)})))

        handle.result.add_done_callback(on_result)


def _b64(data: bytes) -> str:
    import base64
    return base64.b64encode(data or b"").decode("ascii")


def _unb64(text: str) -> bytes:
    import base64
    return base64.b64decode(text)


class RemoteBusClient:
    """Blocking client used by remote processes to join the hub."""

    def __init__(self, host: str, port: int, node_id: str, kind: NodeKind,
                 timeout_s: float = 10.0) -> None:
        self.node_id = node_id
        self._sock = socket.create_connection((host, port), timeout=timeout_s)
        self._sock.settimeout(None)
        self._corr = itertools.count(1)
        self._pending: dict[int, ThreadFuture] = {}
        self._subs: dict[str, Callable] = {}
        self._services: dict[str, Callable] = {}
        self._feedback: dict[int, Callable] = {}
        self._results: dict[int, ThreadFuture] = {}
        self._write_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        resp = self._control(REG, {"node_id": node_id, "kind": kind.value}, timeout_s)
        if not resp.get("ok"):
            raise RuntimeError(f"registration rejected: {resp.get('error')}")

    def close(self) -> None:
        _shutdown_close(self._sock)

    # -- control -----------------------------------------------------------

    def _send(self, env: Envelope) -> None:
        with self._write_lock:
            self._sock.sendall(encode_envelope(env))

    def _control(self, name: str, body: dict, timeout_s: float = 10.0) -> dict:
        corr = next(self._corr)
        fut: ThreadFuture = ThreadFuture()
        self._pending[corr] = fut
        self._send(Envelope(MsgKind.SVC_REQ, name, corr, self.node_id, 0,
                            canonical.dump_bytes(body)))
        return canonical.loads(fut.result(timeout=timeout_s))

    def advertise(self, name: str, qos: Optional[dict] = None, service: bool = False) -> None:
        self._control(ADVERTISE, {"name": name, "qos": qos or {}, "service": service})

    def publish(self, topic: str, payload: bytes) -> None:
        self._send(Envelope(MsgKind.TOPIC_MSG, topic, 0, self.node_id, 0, payload))

    def subscribe(self, topic: str, on_msg: Callable, qos: Optional[dict] = None) -> None:
        self._subs[topic] = on_msg
        self._control(SUBSCRIBE, {"topic": topic, "qos": qos or {}})

    def serve(self, name: str, handler: Callable) -> None:
        self._services[name] = handler
        self.advertise(name, service=True)

    def call(self, name: str, request: bytes, timeout_s: float = 10.0) -> bytes:
        corr = next(self._corr)
        fut: ThreadFuture = ThreadFuture()
        self._pending[corr] = fut
        self._send(Envelope(MsgKind.SVC_REQ, name, corr, self.node_id, 0, request))
        obj = canonical.loads(fut.result(timeout=timeout_s))
        if not obj.get("ok"):
            raise RuntimeError(obj.get("error", "call failed"))
        return _unb64(obj["data_b64"])

    def start_action(self, name: str, goal: bytes,
                     feedback_cb: Optional[Callable] = None) -> ThreadFuture:
        corr = next(self._corr)
        accept: ThreadFuture = ThreadFuture()
        self._pending[corr] = accept
        result: ThreadFuture = ThreadFuture()
        self._results[corr] = result
        if feedback_cb is not None:
            self._feedback[corr] = feedback_cb
        self._send(Envelope(MsgKind.ACTION_GOAL, name, corr, self.node_id, 0, goal))
        obj = canonical.loads(accept.result(timeout=10.0))
        if not obj.get("ok"):
            raise RuntimeError(obj.get("error", "goal rejected"))
        return result

    # -- reader ---------------------------------------------------------------

    def _read_loop(self) -> None:
        while True:
            frame = read_frame(self._sock)
            if frame is None:
                return
            env = decode_envelope(frame)
            if env.kind is MsgKind.SVC_RESP:
                fut = self._pending.pop(env.correlation_id, None)
                if fut is not None:
                    fut.set_result(env.payload)
            elif env.kind is MsgKind.TOPIC_MSG:
                cb = self._subs.get(env.name)
                if cb is not None:
                    cb(env.payload, env)
            elif env.kind is MsgKind.SVC_REQ:
                handler = self._services.get(env.name)
                response = handler(env.payload) if handler else b""
                self._send(Envelope(MsgKind.SVC_RESP, env.name, env.correlation_id,
                                    self.node_id, 0, response))
            elif env.kind is MsgKind.ACTION_FEEDBACK:
                cb = self._feedback.get(env.correlation_id)
                if cb is not None:
                    cb(env.payload)
            elif env.kind is MsgKind.ACTION_RESULT:
                fut = self._results.pop(env.correlation_id, None)
                if fut is not None:
                    obj = canonical.loads(env.payload)
                    fut.set_result(ActionResult(obj["status"], _unb64(obj["data_b64"]),
                                                obj["error"]))
