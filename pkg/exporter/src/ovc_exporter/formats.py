"""Bit-compatible writers for the engine's OVCE / OVCP cache formats.

Layouts are little-endian, version 1, with a word-wise FNV-1a checksum over
everything preceding the final 8 bytes. These mirror the engine's readers
field for field; the exporter ships no reader of its own.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .seedmix import cache_fingerprint, fnv1a64

OVCE_MAGIC = b"OVCE"
OVCP_MAGIC = b"OVCP"
FORMAT_VERSION = 1

_OVCE_HEADER = struct.Struct("<4sIqdQIIIIQ")
_OVCP_HEADER = struct.Struct("<4sIII")
_U64 = struct.Struct("<Q")
_U16 = struct.Struct("<H")


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()


def write_ovce(
    path: str | Path,
    rows: np.ndarray,
    *,
    input_id: int,
    sigma: float,
    master_seed: int,
    n0: int,
    n: int,
    chunk_size: int,
) -> int:
    """Write an embedding cache; returns the file checksum."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.shape[0] != n0 + n:
        raise ValueError(f"expected {n0 + n} rows, got {rows.shape[0]}")
    d = rows.shape[1]
    header = _OVCE_HEADER.pack(
        OVCE_MAGIC, FORMAT_VERSION, input_id, sigma, master_seed,
        n0, n, d, chunk_size, cache_fingerprint(master_seed, sigma, n0, n),
    )
    body = header + rows.tobytes()
    checksum = fnv1a64(body)
    _atomic_write(path, body + _U64.pack(checksum))
    return checksum


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long to serialize ({len(raw)} bytes)")
    return _U16.pack(len(raw)) + raw


def write_ovcp(
    path: str | Path,
    rows: np.ndarray,
    labels: list[str],
    prompt_id: str,
) -> int:
    """Write a prompt head (unit-norm f32 rows); returns the file checksum."""
    rows = np.ascontiguousarray(rows, dtype="<f4")
    k, d = rows.shape
    if len(labels) != k:
        raise ValueError(f"{len(labels)} labels for {k} rows")
    parts = [_OVCP_HEADER.pack(OVCP_MAGIC, FORMAT_VERSION, k, d), _pack_str(prompt_id)]
    parts += [_pack_str(label) for label in labels]
    parts.append(rows.tobytes())
    body = b"".join(parts)
    checksum = fnv1a64(body)
    _atomic_write(path, body + _U64.pack(checksum))
    return checksum


def write_manifest(
    out_dir: str | Path, entries: dict[str, int], transform_note: str | None = None
) -> Path:
    """Checksum manifest accompanying an export: file name -> FNV checksum,
    plus a description of the input transform the noise was applied after."""
    out_dir = Path(out_dir)
    manifest = {
        "kind": "ovc-export-manifest",
        "version": FORMAT_VERSION,
        "files": {
            name: {"checksum": f"{csum:016x}", "bytes": (out_dir / name).stat().st_size}
            for name, csum in sorted(entries.items())
        },
    }
    if transform_note is not None:
        manifest["transform"] = transform_note
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path
