"""Canonical structured-text encoding used for envelopes, logs and reports.

All machine-readable text in the testbed is JSON with sorted keys and
compact separators, so that two runs producing the same data produce the
same bytes. Floats round-trip through Python's shortest-repr formatting.
"""

from __future__ import annotations

import json
from typing import Any


def dumps(obj: Any) -> str:
    """Serialize to canonical structured text (sorted keys, compact)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dump_bytes(obj: Any) -> bytes:
    return dumps(obj).encode("utf-8")


def loads(text: str | bytes) -> Any:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return json.loads(text)


def fnum(x: float) -> str:
    """Shortest round-trip decimal form of a float (deterministic)."""
    return repr(float(x))
