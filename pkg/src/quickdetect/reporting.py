"""Deterministic JSON/CSV serialization and provenance stamps."""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np


def fmt_float(x: float) -> str:
    """17 significant digits, so every double round-trips exactly."""
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def _encode(obj) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Compact JSON with keys in insertion order and 17-digit floats."""
    return _encode(obj)


def digest(payload) -> str:
    return hashlib.sha256(dumps(payload).encode()).hexdigest()


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()
