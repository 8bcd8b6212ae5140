"""Versioned model files: little-endian float64/int64 payload plus a JSON sidecar.

``model.bin`` starts with the magic ``CADM`` and a uint32 format version,
followed by the raw arrays in sidecar order. ``model.bin.json`` records the
model kind, every array's name/dtype/shape/offset, free-form metadata and a
SHA-256 of the payload.
"""
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ModelFileError

MAGIC = b"CADM"
FORMAT_VERSION = 1
_DTYPES = {"f8": "<f8", "i8": "<i8"}


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def save_model(path, kind: str, arrays: dict, meta: dict | None = None) -> None:
    path = Path(path)
    header = MAGIC + struct.pack("<I", FORMAT_VERSION)
    chunks = [header]
    entries = []
    offset = len(header)
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = "i8" if np.issubdtype(arr.dtype, np.integer) or arr.dtype == bool else "f8"
        data = np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes()
        entries.append({"name": name, "dtype": code, "shape": list(arr.shape), "offset": offset})
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)
    path.write_bytes(payload)
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "arrays": entries,
        "meta": meta or {},
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    sidecar_path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_model(path, expect_kind: str | None = None):
    """Return ``(kind, arrays, meta)``; verifies magic, version and checksum."""
    path = Path(path)
    try:
        payload = path.read_bytes()
        doc = json.loads(sidecar_path(path).read_text())
    except FileNotFoundError as exc:
        raise ModelFileError(f"missing model file: {exc.filename}") from None
    if payload[:4] != MAGIC:
        raise ModelFileError(f"{path}: bad magic")
    (version,) = struct.unpack("<I", payload[4:8])
    if version != FORMAT_VERSION or doc.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(f"{path}: unsupported format version {version}")
    if hashlib.sha256(payload).hexdigest() != doc.get("sha256"):
        raise ModelFileError(f"{path}: checksum mismatch")
    kind = doc["kind"]
    if expect_kind is not None and kind != expect_kind:
        raise ModelFileError(f"{path}: expected a {expect_kind!r} model, found {kind!r}")
    arrays = {}
    for e in doc["arrays"]:
        dt = np.dtype(_DTYPES[e["dtype"]])
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=e["offset"]).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(dt.newbyteorder("="), copy=True)
    return kind, arrays, doc.get("meta", {})
