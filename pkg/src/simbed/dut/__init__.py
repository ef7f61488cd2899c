from .firmware import (
    FirmwareImage,
    ImageFormatError,
    image_length,
    pack_image,
    pack_image_sized,
    parse_image,
)
from .device import (
    BOOT_DELAY_S,
    DEVICE_ID_ADDR,
    DEVICE_ID_UNSET,
    FLASH_CHUNK,
    FLASH_SIZE,
    FLASH_WRITE_RATE_BPS,
    FlashNotErasedError,
    FlashRangeError,
    PowerError,
    SimDevice,
)
from .behaviors import Behavior, make_behavior
from .agent import LOG_QOS, TERMINAL_MARKER, DutAgent, log_topic

__all__ = [
    "FirmwareImage",
    "ImageFormatError",
    "image_length",
    "pack_image",
    "pack_image_sized",
    "parse_image",
    "BOOT_DELAY_S",
    "DEVICE_ID_ADDR",
    "DEVICE_ID_UNSET",
    "FLASH_CHUNK",
    "FLASH_SIZE",
    "FLASH_WRITE_RATE_BPS",
    "FlashNotErasedError",
    "FlashRangeError",
    "PowerError",
    "SimDevice",
    "Behavior",
    "make_behavior",
    "LOG_QOS",
    "TERMINAL_MARKER",
    "DutAgent",
    "log_topic",
]
