"""The simulated device: power, 64 KiB flash, boot, serial-side state.

Flash behaves like the real thing: erase sets 0xFF, writes may only clear
bits, so writing over a non-erased region is rejected. The boot behavior
is whatever valid image sits at offset zero; a corrupted image boots
blank. The 4-byte little-endian device ID lives at offset 0xFF00.
"""

from __future__ import annotations

from typing import Callable, Optional

from ..timing.scheduler import Scheduler
from .firmware import ImageFormatError, parse_image

FLASH_SIZE = 64 * 1024
DEVICE_ID_ADDR = 0xFF00
DEVICE_ID_UNSET = 0xFFFFFFFF
BOOT_DELAY_S = 0.2
FLASH_CHUNK = 4096
FLASH_WRITE_RATE_BPS = 64 * 1024


class FlashRangeError(ValueError):
    pass


class FlashNotErasedError(ValueError):
    pass


class PowerError(RuntimeError):
    pass


class SimDevice:
    def __init__(self, sched: Scheduler, dev_id: str, agent=None) -> None:
        self.sched = sched
        self.dev_id = dev_id
        self.agent = agent
        self.power = False
        self.serial_connected = False
        self.logging = False
        self.flash = bytearray(b"\xFF" * FLASH_SIZE)
        self.params: dict = {"serial_port": "/dev/ttyACM0", "baudrate": 115200}
        self.behavior = None  # running behavior instance
        self.flashing = False
        self.radio_world = None
        self.position_provider: Optional[Callable] = None
        self.xtal_drift_ppm = 0.0
        self._boot_timer = None
        self._boot_epoch = 0  # late boot timers from a stale power cycle are ignored

    # -- power / boot -------------------------------------------------------

    def set_power(self, on: bool) -> None:
        if on == self.power:
            return
        if on:
            self.power = True
            self._schedule_boot()
        else:
            self.power = False
            if self.logging and self.agent is not None:
                self.agent.emit_terminal_marker(self)
            self.serial_connected = False
            self.logging = False
            self._stop_behavior()

    def _schedule_boot(self) -> None:
        self._boot_epoch += 1
        epoch = self._boot_epoch
        self._stop_behavior()
        self._boot_timer = self.sched.after(BOOT_DELAY_S, self._boot, epoch)

    def _boot(self, epoch: int) -> None:
        if not self.power or epoch != self._boot_epoch:
            return
        from .behaviors import make_behavior
        try:
            image = parse_image(bytes(self.flash))
            behavior_name, params = image.behavior, image.params
        except ImageFormatError:
            behavior_name, params = "blank", {}
        self.behavior = make_behavior(behavior_name, self, params)
        self.behavior.start()

    def _stop_behavior(self) -> None:
        if self.behavior is not None:
            self.behavior.stop()
            self.behavior = None

    def reset(self) -> None:
        if not self.power:
            raise PowerError("device is off")
        self._schedule_boot()

    @property
    def behavior_name(self) -> str:
        if self.behavior is not None:
            return self.behavior.name
        try:
            return parse_image(bytes(self.flash)).behavior
        except ImageFormatError:
            return "blank"

    # -- flash ------------------------------------------------------------------

    def erase_flash(self) -> None:
        if not self.power:
            raise PowerError("device is off")
        self.flash[:] = b"\xFF" * FLASH_SIZE

    def flash_write(self, addr: int, data: bytes) -> None:
        """Bounded, erase-before-write, bit-clearing flash write."""
        if not self.power:
            raise PowerError("device is off")
        if addr < 0 or addr + len(data) > FLASH_SIZE:
            raise FlashRangeError(f"write [{addr}, {addr + len(data)}) outside flash")
        region = self.flash[addr:addr + len(data)]
        if any(b != 0xFF for b in region):
            raise FlashNotErasedError("target region not erased")
        for i, b in enumerate(data):
            self.flash[addr + i] = region[i] & b  # AND into erased cells

    def erase_region(self, addr: int, length: int) -> None:
        if addr < 0 or addr + length > FLASH_SIZE:
            raise FlashRangeError("erase outside flash")
        self.flash[addr:addr + length] = b"\xFF" * length

    def device_id(self) -> int:
        return int.from_bytes(self.flash[DEVICE_ID_ADDR:DEVICE_ID_ADDR + 4], "little")

    # -- stimulus -----------------------------------------------------------------

    def gpio_edge(self) -> None:
        """Rising edge on the input pin; only a running behavior reacts."""
        if self.power and self.behavior is not None:
            self.behavior.on_gpio_edge()

    def log(self, line: str) -> None:
        if self.agent is not None:
            self.agent.emit_log(self, line)

    def state_dict(self) -> dict:
        return {
            "power": self.power,
            "serial_connected": self.serial_connected,
            "logging": self.logging,
            "behavior": self.behavior_name,
            "flashing": self.flashing,
            "params": dict(self.params),
            "device_id": self.device_id(),
        }
