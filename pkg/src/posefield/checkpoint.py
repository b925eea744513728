"""Single-file checkpoint container: JSON header plus float32 blobs.

Layout: magic ``PFCK``, little-endian u32 header length, UTF-8 JSON header,
then the concatenated array blobs.  The header records format version,
arbitrary metadata, and per-array name/shape/offset/sha256.  Weights are
stored as little-endian float32 while all computation is float64, so a
freshly saved state is not bitwise the live 64-bit state; loading right
after saving (quantize-and-continue) is what makes resumed trajectories
reproducible.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError

__all__ = ["save_checkpoint", "load_checkpoint", "quantize_arrays", "FORMAT_VERSION"]

MAGIC = b"PFCK"
FORMAT_VERSION = 1


def quantize_arrays(arrays: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """The float64 state each array becomes after a save/load round trip."""
    return {k: np.ascontiguousarray(v, dtype="<f4").astype(np.float64) for k, v in arrays.items()}


def save_checkpoint(path: str | Path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write atomically (temp file + rename); identical inputs give identical bytes."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        blob = np.ascontiguousarray(arrays[name], dtype="<f4").tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arrays[name].shape),
                "offset": offset,
                "nbytes": len(blob),
                "sha256": hashlib.sha256(blob).hexdigest(),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = {"format_version": FORMAT_VERSION, "meta": meta, "arrays": entries}
    hjson = json.dumps(header, sort_keys=True).encode()
    payload = MAGIC + struct.pack("<I", len(hjson)) + hjson + b"".join(blobs)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a checkpoint; returns (meta, arrays as float64)."""
    path = Path(path)
    if not path.exists():
        raise CorruptionError(f"missing checkpoint: {path}")
    raw = path.read_bytes()
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a posefield checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise CorruptionError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptionError(f"{path}: unreadable header ({err})") from err
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {version!r} unsupported (expected {FORMAT_VERSION})")

    body = raw[8 + hlen :]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        lo, n = entry["offset"], entry["nbytes"]
        blob = body[lo : lo + n]
        if len(blob) != n:
            raise CorruptionError(f"{path}: truncated blob for array {entry['name']!r}")
        if hashlib.sha256(blob).hexdigest() != entry["sha256"]:
            raise CorruptionError(f"{path}: checksum mismatch in array {entry['name']!r}")
        arrays[entry["name"]] = (
            np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(entry["shape"])
        )
    return header["meta"], arrays
