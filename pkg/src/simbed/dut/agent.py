"""The DuT node: a management process in front of one or more devices.

Exposes the control surface as bus services (power, serial, params,
reset, erase, flash-address write) plus the firmware flash as an action
with per-chunk progress. Serial log lines are timestamped here, on the
DuT node's own clock, and published on the node's log topic.
"""

from __future__ import annotations

from typing import Optional

from .. import canonical
from ..bus import ActionCanceled, ActionContext, ActionFailed, NodeHandle, QosProfile, Reliability
from ..timing.clocks import NodeClock
from ..timing.scheduler import Scheduler
from .device import (
    FLASH_CHUNK,
    FLASH_WRITE_RATE_BPS,
    FlashNotErasedError,
    FlashRangeError,
    PowerError,
    SimDevice,
)
from .firmware import ImageFormatError, parse_image

TERMINAL_MARKER = "LOG,TERMINATED"

# Default log QoS: reliable, deep enough history for ranging bursts.
LOG_QOS = QosProfile(Reliability.RELIABLE, history_depth=1000)


def log_topic(node_id: str) -> str:
    return f"/dut/{node_id}/log"


def _ok(**fields) -> bytes:
    fields["ok"] = True
    return canonical.dump_bytes(fields)


def _err(error: str) -> bytes:
    return canonical.dump_bytes({"ok": False, "error": error})


class DutAgent:
    def __init__(self, sched: Scheduler, handle: NodeHandle, clock: NodeClock,
                 radio_world=None, n_devices: int = 1) -> None:
        self.sched = sched
        self.handle = handle
        self.clock = clock
        self.node_id = handle.node_id
        self.devices: dict[str, SimDevice] = {}
        for i in range(n_devices):
            dev = SimDevice(sched, f"dev{i}", agent=self)
            dev.radio_world = radio_world
            self.devices[dev.dev_id] = dev
        self.log_seq = 0
        self.topic = log_topic(self.node_id)
        handle.advertise(self.topic)
        base = f"/dut/{self.node_id}"
        handle.serve(f"{base}/power", self._svc_power)
        handle.serve(f"{base}/serial", self._svc_serial)
        handle.serve(f"{base}/params_get", self._svc_params_get)
        handle.serve(f"{base}/params_set", self._svc_params_set)
        handle.serve(f"{base}/reset", self._svc_reset)
        handle.serve(f"{base}/erase", self._svc_erase)
        handle.serve(f"{base}/flash_write", self._svc_flash_write)
        handle.serve(f"{base}/state", self._svc_state)
        handle.action_server(f"{base}/flash", self._run_flash, accept=self._accept_flash)

    @property
    def device(self) -> SimDevice:
        return self.devices["dev0"]

    def _pick(self, body: dict) -> SimDevice:
        return self.devices[body.get("device", "dev0")]

    # -- logging -----------------------------------------------------------------

    def emit_log(self, device: SimDevice, line: str) -> None:
        """Timestamp a serial line on this node's clock and publish it."""
        if not device.logging:
            return
        self.log_seq += 1
        record = {
            "node_id": self.node_id,
            "seq": self.log_seq,
            "dut_timestamp_ns": self.clock.read_ns(),
            "line": line,
        }
        self.handle.publish(self.topic, canonical.dump_bytes(record), LOG_QOS)

    def emit_terminal_marker(self, device: SimDevice) -> None:
        self.emit_log(device, TERMINAL_MARKER)

    def gpio_edge(self, device: str = "dev0") -> None:
        self.devices[device].gpio_edge()

    # -- services -----------------------------------------------------------------

    def _svc_power(self, request: bytes) -> bytes:
        body = canonical.loads(request)
        dev = self._pick(body)
        dev.set_power(bool(body["on"]))
        return _ok(state=dev.state_dict())

    def _svc_serial(self, request: bytes) -> bytes:
        body = canonical.loads(request)
        dev = self._pick(body)
        connect = bool(body["connect"])
        if connect and not dev.power:
            return _err("power_off")
        dev.serial_connected = connect
        if connect:
            self.log_seq = 0  # fresh logging session
            dev.logging = True
        else:
            if dev.logging:
                dev.logging = False
            dev.serial_connected = False
        return _ok(state=dev.state_dict())

    def _svc_params_get(self, request: bytes) -> bytes:
        body = canonical.loads(request) if request else {}
        dev = self._pick(body)
        return _ok(params=dict(dev.params))

    def _svc_params_set(self, request: bytes) -> bytes:
        body = canonical.loads(request)
        dev = self._pick(body)
        updates = body.get("params", {})
        unknown = [k for k in updates if k not in dev.params]
        if unknown:
            return _err(f"unknown parameter {unknown[0]!r}")
        dev.params.update(updates)
        return _ok(params=dict(dev.params))

    def _svc_reset(self, request: bytes) -> bytes:
        body = canonical.loads(request) if request else {}
        dev = self._pick(body)
        try:
            dev.reset()
        except PowerError:
            return _err("power_off")
        return _ok()

    def _svc_erase(self, request: bytes) -> bytes:
        body = canonical.loads(request) if request else {}
        dev = self._pick(body)
        try:
            dev.erase_flash()
        except PowerError:
            return _err("power_off")
        return _ok()

    def _svc_flash_write(self, request: bytes) -> bytes:
        body = canonical.loads(request)
        dev = self._pick(body)
        try:
            data = bytes.fromhex(body["hex"])
        except ValueError:
            return _err("bad_hex")
        try:
            dev.flash_write(int(body["addr"]), data)
        except PowerError:
            return _err("power_off")
        except FlashRangeError:
            return _err("out_of_range")
        except FlashNotErasedError:
            return _err("not_erased")
        return _ok()

    def _svc_state(self, request: bytes) -> bytes:
        body = canonical.loads(request) if request else {}
        dev = self._pick(body)
        return _ok(state=dev.state_dict())

    # -- flash action ------------------------------------------------------------

    def _accept_flash(self, goal: bytes):
        dev = self.device
        if not dev.power:
            return (False, "power_off")
        if dev.flashing:
            return (False, "flash_in_progress")
        return (True, "")

    def _run_flash(self, goal: bytes, ctx: ActionContext):
        dev = self.device
        try:
            parse_image(goal)
        except ImageFormatError as exc:
            raise ActionFailed(f"image_rejected:{exc}")
        dev.flashing = True
        try:
            total = len(goal)
            dev.erase_region(0, total)
            written = 0
            while written < total:
                chunk = goal[written:written + FLASH_CHUNK]
                yield len(chunk) / FLASH_WRITE_RATE_BPS
                if ctx.cancel_requested:
                    raise ActionCanceled("flash canceled")
                if not dev.power:
                    raise ActionFailed("power_lost")
                dev.flash_write(written, chunk)
                written += len(chunk)
                ctx.feedback(canonical.dump_bytes(
                    {"progress": int(100 * written / total)}))
            image = parse_image(bytes(dev.flash[:total]))
            dev.reset()
        finally:
            dev.flashing = False
        return canonical.dump_bytes({"behavior": image.behavior})
