"""Canonical JSON serialization and content digests.

All persisted artifacts are JSON with sorted keys, compact separators, and
floats rendered by Python's shortest round-trip repr, so equal values always
produce byte-identical text and 64-bit floats survive a save/load round trip
exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np


def jsonable(obj):
    """Recursively convert arrays, numpy scalars, and dataclasses to JSON types."""
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, float) and not np.isfinite(obj):
        raise ValueError(f"non-finite value {obj} cannot be serialized")
    return obj


def canonical_json(obj) -> str:
    """Deterministic single-line JSON: sorted keys, no whitespace."""
    return json.dumps(jsonable(obj), sort_keys=True, separators=(",", ":"))


def digest_of(obj) -> str:
    """sha256 hex digest of the canonical JSON form of obj."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()


def file_digest(path) -> str:
    """sha256 hex digest of a file's bytes."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
