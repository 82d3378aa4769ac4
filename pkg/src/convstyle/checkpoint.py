"""Binary checkpoint format for trained parameters.

Layout: 8-byte magic ``CVSTYL01``, a 4-byte little-endian header length,
a UTF-8 JSON header (format version, config echo, tensor directory with
name/shape/byte offset), then the raw tensor data as little-endian
float64 in directory order. The header JSON is canonicalized (sorted
keys, no whitespace) so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamStore
from .errors import ConfigError, ValidationError

MAGIC = b"CVSTYL01"
FORMAT_VERSION = 1


def save_checkpoint(path: str | Path, params: ParamStore, config: dict) -> None:
    """Write parameters plus a config echo as a single binary file."""
    directory = []
    blobs = []
    offset = 0
    for name, tensor in params.items():
        data = np.ascontiguousarray(tensor.data, dtype="<f8")
        directory.append({"name": name, "shape": list(tensor.data.shape),
                          "offset": offset})
        blobs.append(data.tobytes())
        offset += data.nbytes
    header = {"format_version": FORMAT_VERSION, "config": config,
              "tensors": directory}
    header_bytes = json.dumps(header, sort_keys=True,
                              separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (named tensors, config echo)."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise ValidationError(f"{path}: not a convstyle checkpoint (bad magic)")
    header_len = struct.unpack("<I", raw[8:12])[0]
    header_end = 12 + header_len
    if len(raw) < header_end:
        raise ValidationError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: corrupt checkpoint header ({exc})") from exc
    if header.get("format_version") != FORMAT_VERSION:
        raise ConfigError(
            f"{path}: unsupported checkpoint version {header.get('format_version')!r}")
    data = raw[header_end:]
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + count * 8
        if end > len(data):
            raise ValidationError(f"{path}: truncated tensor {entry['name']!r}")
        arr = np.frombuffer(data[start:end], dtype="<f8").astype(np.float64)
        tensors[entry["name"]] = arr.reshape(shape)
    return tensors, header["config"]
