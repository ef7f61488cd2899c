"""Firmware image packing: header, manifest, opaque blob, CRC.

Image layout: 16-byte header {magic "FWIM", manifest_len u32 BE,
blob_len u32 BE, crc32 u32 BE over manifest+blob}, then the manifest as
canonical structured text, then the blob. The simulator selects the boot
behavior from the manifest; the blob is payload with no interpretation.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

from .. import canonical

MAGIC = b"FWIM"
HEADER = struct.Struct(">4sIII")

KNOWN_BEHAVIORS = ("anchor", "tag", "gpio_echo", "blank")


class ImageFormatError(ValueError):
    pass


@dataclass
class FirmwareImage:
    behavior: str
    params: dict = field(default_factory=dict)
    blob: bytes = b""
    checksum: int = 0

    @property
    def manifest(self) -> dict:
        return {"behavior": self.behavior, "params": self.params}


def pack_image(behavior: str, params: dict | None = None, blob: bytes | None = None,
               blob_size: int = 8192) -> bytes:
    """Build an image file; a deterministic filler blob is used if none given."""
    if behavior not in KNOWN_BEHAVIORS:
        raise ImageFormatError(f"unknown behavior {behavior!r}")
    manifest = canonical.dump_bytes({"behavior": behavior, "params": params or {}})
    if blob is None:
        filler = (behavior.encode() + b"\x00") * (blob_size // (len(behavior) + 1) + 1)
        blob = filler[:blob_size]
    crc = zlib.crc32(manifest + blob) & 0xFFFFFFFF
    return HEADER.pack(MAGIC, len(manifest), len(blob), crc) + manifest + blob


def pack_image_sized(behavior: str, params: dict | None = None, total_size: int = 16384) -> bytes:
    """Image whose total file size is exactly `total_size` bytes."""
    manifest = canonical.dump_bytes({"behavior": behavior, "params": params or {}})
    blob_size = total_size - HEADER.size - len(manifest)
    if blob_size < 0:
        raise ImageFormatError(f"total_size {total_size} too small for manifest")
    return pack_image(behavior, params, blob_size=blob_size)


def parse_image(data: bytes) -> FirmwareImage:
    """Parse and verify an image file; raises ImageFormatError on any defect."""
    if len(data) < HEADER.size:
        raise ImageFormatError("truncated header")
    magic, manifest_len, blob_len, crc = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ImageFormatError("bad magic")
    end = HEADER.size + manifest_len + blob_len
    if end > len(data):
        raise ImageFormatError("truncated body")
    manifest_raw = data[HEADER.size:HEADER.size + manifest_len]
    blob = data[HEADER.size + manifest_len:end]
    if zlib.crc32(manifest_raw + blob) & 0xFFFFFFFF != crc:
        raise ImageFormatError("checksum mismatch")
    manifest = canonical.loads(manifest_raw)
    behavior = manifest.get("behavior", "")
    if behavior not in KNOWN_BEHAVIORS:
        raise ImageFormatError(f"unknown behavior {behavior!r}")
    return FirmwareImage(behavior, manifest.get("params", {}), blob, crc)


def image_length(data: bytes) -> int:
    """Total byte length of the image file at the start of `data`."""
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise ImageFormatError("no image header")
    _, manifest_len, blob_len, _ = HEADER.unpack_from(data)
    return HEADER.size + manifest_len + blob_len
