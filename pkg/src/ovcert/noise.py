"""Replayable Gaussian noise streams and the shared sampling routines.

A stream is identified by one 64-bit master seed; chunk i draws its own
sub-seed from a splitmix64 mix of (master_seed, i), so any later run (or any
worker partitioning that respects chunk boundaries) regenerates bitwise
identical noise without storing per-sample seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .model import Encoder, PromptHead, predict_batch

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3

DEFAULT_CHUNK_SIZE = 400


def splitmix64(seed: int, index: int) -> int:
    """index-th output of the splitmix64 sequence started at seed."""
    z = (seed + (index + 1) * _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fnv1a64(data: bytes) -> int:
    """FNV-1a over little-endian 8-byte words with a trailing length mix.

    Word-at-a-time rather than byte-at-a-time keeps multi-megabyte payload
    checksums affordable in pure Python; the final length fold catches
    truncation at word boundaries.
    """
    h = _FNV_OFFSET
    n = len(data)
    whole = n - n % 8
    if whole:
        for w in np.frombuffer(data, dtype="<u8", count=whole // 8).tolist():
            h = ((h ^ w) * _FNV_PRIME) & MASK64
    if whole != n:
        h = ((h ^ int.from_bytes(data[whole:], "little")) * _FNV_PRIME) & MASK64
    return ((h ^ n) * _FNV_PRIME) & MASK64


def trace_fingerprint(master_seed: int, sigma: float, chunk_offset: int, n: int) -> int:
    return fnv1a64(
        struct.pack("<QdQQ", master_seed & MASK64, float(sigma), chunk_offset, n)
    )


def cache_fingerprint(master_seed: int, sigma: float, n0: int, n: int) -> int:
    return fnv1a64(struct.pack("<QdII", master_seed & MASK64, float(sigma), n0, n))


@dataclass(frozen=True)
class NoiseStream:
    """Seeded N(0, sigma^2) noise source, generated and consumed in fixed-size
    chunks. Immutable; chunk contents depend only on (master_seed, chunk index,
    dimension), never on scheduling."""

    master_seed: int
    sigma: float
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        object.__setattr__(self, "master_seed", int(self.master_seed) & MASK64)


def gaussian_chunk(stream: NoiseStream, chunk_index: int, dim: int) -> np.ndarray:
    """chunk_size x dim block of i.i.d. N(0, sigma^2) draws for one chunk."""
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    if chunk_index < 0:
        raise ConfigError(f"chunk_index must be >= 0, got {chunk_index}")
    sub = splitmix64(stream.master_seed, chunk_index)
    rng = np.random.Generator(np.random.PCG64(sub))
    return stream.sigma * rng.standard_normal((stream.chunk_size, dim))


@dataclass(frozen=True)
class ClassCounts:
    """Per-class prediction counts over one Monte Carlo draw."""

    counts: np.ndarray
    total: int

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        if int(counts.sum()) != self.total:
            raise ConfigError(
                f"counts sum {int(counts.sum())} != declared total {self.total}"
            )
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def top_class(self) -> int:
        return int(np.argmax(self.counts))


@dataclass(frozen=True)
class PredictionTrace:
    """Per-draw predicted classes, in draw order, bound to the noise that
    produced them via (master_seed, sigma, chunk_offset, length)."""

    preds: np.ndarray
    master_seed: int
    sigma: float
    chunk_offset: int

    def __post_init__(self) -> None:
        preds = np.asarray(self.preds, dtype=np.int32)
        preds.setflags(write=False)
        object.__setattr__(self, "preds", preds)

    def __len__(self) -> int:
        return len(self.preds)

    @property
    def stream_fingerprint(self) -> int:
        return trace_fingerprint(
            self.master_seed, self.sigma, self.chunk_offset, len(self.preds)
        )

    def prefix(self, m: int) -> "PredictionTrace":
        if m > len(self.preds):
            raise ConfigError(f"prefix length {m} exceeds trace length {len(self.preds)}")
        return PredictionTrace(
            self.preds[:m], self.master_seed, self.sigma, self.chunk_offset
        )

    def to_counts(self, k: int) -> ClassCounts:
        return ClassCounts(np.bincount(self.preds, minlength=k), len(self.preds))


def selection_chunks(n0: int, chunk_size: int) -> int:
    """Number of chunks reserved for the selection draw; the estimation draw
    starts at this offset so the two phases never share noise."""
    return -(-n0 // chunk_size)


def _iter_noisy_batches(enc, x, n, stream, chunk_offset):
    """Yield embedding batches for draws [0, n) of a phase anchored at
    chunk_offset. Each chunk is encoded as a single batch whose shape depends
    only on (n, chunk_size), which is what makes replay bitwise stable."""
    if n < 1:
        raise ConfigError(f"sample count must be >= 1, got {n}")
    xv = x.x if hasattr(x, "x") else np.asarray(x, dtype=np.float64)
    if xv.shape != (enc.dim_in,):
        raise DimensionMismatchError(
            f"input shape {xv.shape} != encoder dim_in {enc.dim_in}"
        )
    done = 0
    index = chunk_offset
    while done < n:
        rows = min(stream.chunk_size, n - done)
        noise = gaussian_chunk(stream, index, enc.dim_in)[:rows]
        yield enc.encode_batch(xv[None, :] + noise)
        done += rows
        index += 1


def sample_under_noise(
    enc: Encoder,
    head: PromptHead,
    x,
    n: int,
    stream: NoiseStream,
    chunk_offset: int = 0,
) -> ClassCounts:
    """Class counts of the base classifier over n noisy draws; costs exactly n
    encoder invocations."""
    counts = np.zeros(head.k, dtype=np.int64)
    for emb in _iter_noisy_batches(enc, x, n, stream, chunk_offset):
        counts += np.bincount(predict_batch(head, emb), minlength=head.k)
    return ClassCounts(counts, n)


def pred_under_noise(
    enc: Encoder,
    head: PromptHead,
    x,
    n: int,
    stream: NoiseStream,
    chunk_offset: int = 0,
) -> PredictionTrace:
    """Like sample_under_noise but preserving per-draw order; collapsing the
    trace to counts reproduces sample_under_noise on the same chunks."""
    parts = [
        predict_batch(head, emb)
        for emb in _iter_noisy_batches(enc, x, n, stream, chunk_offset)
    ]
    return PredictionTrace(
        np.concatenate(parts), stream.master_seed, stream.sigma, chunk_offset
    )


def count_prediction(
    emb_rows: np.ndarray,
    head: PromptHead,
    n0: int,
    n: int,
    block: int = DEFAULT_CHUNK_SIZE,
) -> tuple[ClassCounts, ClassCounts]:
    """Selection and estimation counts from precomputed embedding rows.

    Rows [0, n0) are the selection draw, rows [n0, n0+n) the estimation draw.
    Performs zero encoder invocations. ``block`` must equal the chunk size the
    rows were generated under for the counts to be bitwise identical to the
    live path.
    """
    if n0 < 1 or n < 1:
        raise ConfigError(f"n0 and n must be >= 1, got n0={n0} n={n}")
    emb_rows = np.asarray(emb_rows)
    if emb_rows.ndim != 2 or emb_rows.shape[0] != n0 + n:
        raise DimensionMismatchError(
            f"expected {n0 + n} embedding rows, got shape {emb_rows.shape}"
        )

    def _blocked_counts(rows: np.ndarray) -> ClassCounts:
        counts = np.zeros(head.k, dtype=np.int64)
        for start in range(0, rows.shape[0], block):
            preds = predict_batch(head, rows[start : start + block])
            counts += np.bincount(preds, minlength=head.k)
        return ClassCounts(counts, rows.shape[0])

    return _blocked_counts(emb_rows[:n0]), _blocked_counts(emb_rows[n0:])
