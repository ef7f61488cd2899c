"""Firmware behaviors: what a booted device actually does.

anchor     responds to ranging exchanges under its flash-configured ID
tag        fires a ranging burst against its configured anchors on boot
gpio_echo  writes one log line per rising edge on the input pin
blank      nothing (erased or corrupted flash)
"""

from __future__ import annotations

from .device import DEVICE_ID_UNSET, SimDevice


class Behavior:
    name = "blank"

    def __init__(self, device: SimDevice, params: dict) -> None:
        self.device = device
        self.params = params
        self.running = False

    def start(self) -> None:
        self.running = True

    def stop(self) -> None:
        self.running = False

    def on_gpio_edge(self) -> None:
        pass


class BlankBehavior(Behavior):
    name = "blank"


class GpioEchoBehavior(Behavior):
    """Logs `EDGE,<index>` per rising edge; the index restarts every boot."""

    name = "gpio_echo"

    def __init__(self, device: SimDevice, params: dict) -> None:
        super().__init__(device, params)
        self.edge_index = 0

    def on_gpio_edge(self) -> None:
        if not self.running:
            return
        self.device.log(f"EDGE,{self.edge_index}")
        self.edge_index += 1


class AnchorBehavior(Behavior):
    name = "anchor"

    def __init__(self, device: SimDevice, params: dict) -> None:
        super().__init__(device, params)
        self.radio_id = int(params.get("radio_id", device.device_id()))

    def start(self) -> None:
        super().start()
        if self.radio_id == DEVICE_ID_UNSET:
            self.device.log("ANCHOR,ERR,no_id")
            return
        if self.device.radio_world is None:
            self.device.log("ANCHOR,ERR,no_radio")
            return
        self.device.radio_world.register_anchor(self.radio_id, self.device)
        self.device.log(f"ANCHOR,{self.radio_id},READY")

    def stop(self) -> None:
        super().stop()
        if self.device.radio_world is not None:
            self.device.radio_world.unregister(self.device)


class TagBehavior(Behavior):
    """On boot: 100 double-sided two-way ranging exchanges per anchor,
    round-robin, each logged as `RNG,<k>,<anchor_id>,<d_mm>,<status>`."""

    name = "tag"

    def __init__(self, device: SimDevice, params: dict) -> None:
        super().__init__(device, params)
        self.anchor_ids = [int(a) for a in params.get("anchor_ids", [])]
        self.n_exchanges = int(params.get("n_exchanges", 100))
        self.radio_id = int(params.get("radio_id", device.device_id()))
        self._burst_proc = None

    def start(self) -> None:
        super().start()
        world = self.device.radio_world
        if world is None:
            self.device.log("TAG,ERR,no_radio")
            return
        world.register_tag(self.radio_id, self.device)
        self.device.log(f"TAG,BOOT,{self.radio_id}")
        self._burst_proc = self.device.sched.spawn(self._burst())

    def stop(self) -> None:
        super().stop()
        if self.device.radio_world is not None:
            self.device.radio_world.unregister(self.device)

    def _burst(self):
        world = self.device.radio_world
        n_ok = 0
        n_dropped = 0
        if not self.anchor_ids:
            self.device.log("TAG,WARN,no_anchors")
        for k in range(self.n_exchanges):
            for anchor_id in self.anchor_ids:
                if not self.running or not self.device.power:
                    return
                m = yield from world.exchange(self.device, anchor_id, k)
                if m.status == "ok":
                    n_ok += 1
                    self.device.log(f"RNG,{k},{anchor_id},{repr(m.distance_m * 1e3)},ok")
                else:
                    n_dropped += 1
                    self.device.log(f"RNG,{k},{anchor_id},nan,dropped")
        self.device.log(f"TAG,DONE,{n_ok},{n_dropped}")


_REGISTRY = {
    "blank": BlankBehavior,
    "gpio_echo": GpioEchoBehavior,
    "anchor": AnchorBehavior,
    "tag": TagBehavior,
}


def make_behavior(name: str, device: SimDevice, params: dict) -> Behavior:
    cls = _REGISTRY.get(name, BlankBehavior)
    return cls(device, params)
