"""PALMW1 weights file.

Layout: the ASCII line ``PALMW1\\n``, a little-endian uint64 byte length, a
UTF-8 JSON object ``{"arch": {...}, "tensors": [{name, shape, offset, len}]}``,
then the raw little-endian float32 payload. ``offset``/``len`` count float32
elements from the start of the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"PALMW1\n"


class WeightsFormatError(ValueError):
    pass


def save_weights(path, tensors: Mapping[str, np.ndarray], arch: dict | None = None) -> None:
    index = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        flat = np.ascontiguousarray(arr, dtype="<f4").ravel()
        index.append({"name": name, "shape": list(np.shape(arr)), "offset": offset, "len": int(flat.size)})
        chunks.append(flat.tobytes())
        offset += flat.size
    header = json.dumps({"arch": arch or {}, "tensors": index}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise WeightsFormatError(f"{path}: missing PALMW1 header")
    pos = len(MAGIC)
    try:
        (n,) = struct.unpack_from("<Q", raw, pos)
        pos += 8
        meta = json.loads(raw[pos : pos + n].decode("utf-8"))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsFormatError(f"{path}: corrupt header ({exc})") from exc
    payload = np.frombuffer(raw, dtype="<f4", offset=pos + n)
    tensors = {}
    for entry in meta["tensors"]:
        start, length = entry["offset"], entry["len"]
        if start + length > payload.size:
            raise WeightsFormatError(f"{path}: tensor {entry['name']} runs past the payload")
        tensors[entry["name"]] = payload[start : start + length].astype(np.float32).reshape(entry["shape"])
    return tensors, meta.get("arch", {})
