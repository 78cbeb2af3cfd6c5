"""The deterministic-noise contract shared with the certification engine.

The engine replays noise from a 64-bit master seed: chunk i of a stream draws
a sub-seed splitmix64(master_seed, i) and generates chunk_size x dim values
from numpy's PCG64 at that sub-seed, scaled by sigma. Files written here must
embed seeds under exactly that scheme so the engine's fingerprint checks pass
and any later engine-side replay regenerates identical noise. Do not change
any constant below without versioning the file formats.
"""

from __future__ import annotations

import struct

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

DEFAULT_CHUNK_SIZE = 400


def splitmix64(seed: int, index: int) -> int:
    z = (seed + (index + 1) * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fnv1a64(data: bytes) -> int:
    """Word-wise FNV-1a with a trailing length fold (engine-compatible)."""
    h = _FNV_OFFSET
    n = len(data)
    whole = n - n % 8
    if whole:
        for w in np.frombuffer(data, dtype="<u8", count=whole // 8).tolist():
            h = ((h ^ w) * _FNV_PRIME) & MASK64
    if whole != n:
        h = ((h ^ int.from_bytes(data[whole:], "little")) * _FNV_PRIME) & MASK64
    return ((h ^ n) * _FNV_PRIME) & MASK64


def cache_fingerprint(master_seed: int, sigma: float, n0: int, n: int) -> int:
    return fnv1a64(struct.pack("<QdII", master_seed & MASK64, float(sigma), n0, n))


def derive_master_seed(base_seed: int, input_id: int) -> int:
    """Per-input master seed, same derivation the engine CLI uses."""
    return splitmix64(base_seed, input_id)


def gaussian_chunk(
    master_seed: int, sigma: float, chunk_index: int, dim: int,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> np.ndarray:
    sub = splitmix64(master_seed & MASK64, chunk_index)
    rng = np.random.Generator(np.random.PCG64(sub))
    return sigma * rng.standard_normal((chunk_size, dim))


def iter_noise_rows(master_seed, sigma, n, dim, chunk_size=DEFAULT_CHUNK_SIZE,
                    chunk_offset=0):
    """Yield (chunk_rows,) noise blocks covering draws [0, n) of a phase."""
    done = 0
    index = chunk_offset
    while done < n:
        rows = min(chunk_size, n - done)
        yield gaussian_chunk(master_seed, sigma, index, dim, chunk_size)[:rows]
        done += rows
        index += 1


def selection_chunks(n0: int, chunk_size: int) -> int:
    return -(-n0 // chunk_size)
