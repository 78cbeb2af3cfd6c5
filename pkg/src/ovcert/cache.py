"""Persistence layer: embedding caches (OVCE), fitted Gaussian parameters
(OVCM), prompt heads (OVCP), and per-input certification metadata.

Binary layouts are little-endian with a trailing word-wise FNV checksum; files
are written atomically (temp + rename) and loads reject anything that fails
magic, version, fingerprint, size, or checksum verification with a diagnostic
naming the failed field.
"""

from __future__ import annotations

import json
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CacheCorruptError,
    ConfigError,
    DimensionMismatchError,
    InsufficientSamplesError,
    NonPsdError,
    SeedMismatchError,
)
from .model import EMB_DTYPE, Encoder, PromptHead
from .noise import (
    MASK64,
    NoiseStream,
    PredictionTrace,
    cache_fingerprint,
    fnv1a64,
    gaussian_chunk,
    selection_chunks,
)

OVCE_MAGIC = b"OVCE"
OVCM_MAGIC = b"OVCM"
OVCP_MAGIC = b"OVCP"
FORMAT_VERSION = 1

_OVCE_HEADER = struct.Struct("<4sIqdQIIIIQ")
_OVCM_HEADER = struct.Struct("<4sIqdIQd")
_OVCP_HEADER = struct.Struct("<4sIII")
_U64 = struct.Struct("<Q")
_U16 = struct.Struct("<H")

# Jitter escalation cap for covariance repair, relative to trace(cov).
_JITTER_CAP_FRAC = 1e-2


def _atomic_write(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp.{os.getpid()}")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise CacheCorruptError(f"storage write failed for {path}: {exc}") from exc
    finally:
        if tmp.exists():
            tmp.unlink()


def _read_file(path: str | Path, what: str) -> bytes:
    path = Path(path)
    try:
        return path.read_bytes()
    except FileNotFoundError:
        from .errors import CacheMissError

        raise CacheMissError(f"{what} file not found: {path}") from None


def _check_magic_version(blob: bytes, magic: bytes, path) -> None:
    if len(blob) < 8:
        raise CacheCorruptError(f"{path}: truncated before magic")
    if blob[:4] != magic:
        raise CacheCorruptError(
            f"{path}: magic mismatch, expected {magic!r} got {blob[:4]!r}"
        )
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise CacheCorruptError(f"{path}: unsupported version {version}")


def _check_checksum(blob: bytes, path) -> None:
    if len(blob) < 8:
        raise CacheCorruptError(f"{path}: truncated before checksum")
    stored = _U64.unpack_from(blob, len(blob) - 8)[0]
    actual = fnv1a64(blob[:-8])
    if stored != actual:
        raise CacheCorruptError(
            f"{path}: checksum mismatch (stored {stored:#x}, computed {actual:#x})"
        )


# ---------------------------------------------------------------------------
# OVCE: embedding cache
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingCache:
    """All n0+n encoder outputs for one input under one seeded noise stream.
    Rows [0, n0) belong to the selection draw, rows [n0, n0+n) to the
    estimation draw (disjoint noise chunks)."""

    input_id: int
    sigma: float
    master_seed: int
    n0: int
    n: int
    d: int
    chunk_size: int
    rows: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=EMB_DTYPE)
        if rows.shape != (self.n0 + self.n, self.d):
            raise DimensionMismatchError(
                f"embedding rows shape {rows.shape} != ({self.n0 + self.n}, {self.d})"
            )
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "master_seed", int(self.master_seed) & MASK64)

    @property
    def fingerprint(self) -> int:
        return cache_fingerprint(self.master_seed, self.sigma, self.n0, self.n)


def build_embedding_cache(enc: Encoder, x, cfg, stream: NoiseStream) -> EmbeddingCache:
    """Encode all n0+n noisy draws for one input, in chunk order.

    Costs exactly n0+n encoder invocations and is idempotent given
    (x, cfg, stream): rebuilding yields bitwise identical rows.
    """
    from .noise import _iter_noisy_batches

    if cfg.sigma != stream.sigma:
        raise ConfigError(
            f"config sigma {cfg.sigma} != stream sigma {stream.sigma}"
        )
    c0 = selection_chunks(cfg.n0, stream.chunk_size)
    selection = list(_iter_noisy_batches(enc, x, cfg.n0, stream, 0))
    estimation = list(_iter_noisy_batches(enc, x, cfg.n, stream, c0))
    rows = np.concatenate(selection + estimation, axis=0)
    input_id = x.id if hasattr(x, "id") else -1
    return EmbeddingCache(
        input_id=input_id,
        sigma=stream.sigma,
        master_seed=stream.master_seed,
        n0=cfg.n0,
        n=cfg.n,
        d=enc.dim_out,
        chunk_size=stream.chunk_size,
        rows=rows,
    )


def write_embedding_cache(cache: EmbeddingCache, path: str | Path) -> None:
    header = _OVCE_HEADER.pack(
        OVCE_MAGIC,
        FORMAT_VERSION,
        cache.input_id,
        cache.sigma,
        cache.master_seed,
        cache.n0,
        cache.n,
        cache.d,
        cache.chunk_size,
        cache.fingerprint,
    )
    payload = np.ascontiguousarray(cache.rows, dtype="<f4").tobytes()
    body = header + payload
    _atomic_write(path, body + _U64.pack(fnv1a64(body)))


def load_embedding_cache(path: str | Path) -> EmbeddingCache:
    blob = _read_file(path, "embedding cache")
    _check_magic_version(blob, OVCE_MAGIC, path)
    if len(blob) < _OVCE_HEADER.size + 8:
        raise CacheCorruptError(f"{path}: truncated header")
    (_, _, input_id, sigma, master_seed, n0, n, d, chunk_size, fingerprint) = (
        _OVCE_HEADER.unpack_from(blob, 0)
    )
    expected = cache_fingerprint(master_seed, sigma, n0, n)
    if fingerprint != expected:
        raise CacheCorruptError(
            f"{path}: fingerprint mismatch (stored {fingerprint:#x}, "
            f"recomputed {expected:#x})"
        )
    want = _OVCE_HEADER.size + (n0 + n) * d * 4 + 8
    if len(blob) != want:
        raise CacheCorruptError(
            f"{path}: payload truncated or oversized ({len(blob)} bytes, expected {want})"
        )
    _check_checksum(blob, path)
    rows = (
        np.frombuffer(blob, dtype="<f4", count=(n0 + n) * d, offset=_OVCE_HEADER.size)
        .reshape(n0 + n, d)
        .copy()
    )
    return EmbeddingCache(input_id, sigma, master_seed, n0, n, d, chunk_size, rows)


# ---------------------------------------------------------------------------
# OVCM: fitted multivariate normal parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MvnParams:
    """Mean and covariance fitted to cached embeddings (or their image under a
    prompt head). Stored f32 on disk, f64 in memory."""

    input_id: int
    sigma: float
    d: int
    mu: np.ndarray
    cov: np.ndarray
    fit_sample_count: int
    jitter_applied: float

    def __post_init__(self) -> None:
        mu = np.asarray(self.mu, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mu.shape != (self.d,) or cov.shape != (self.d, self.d):
            raise DimensionMismatchError(
                f"mu/cov shapes {mu.shape}/{cov.shape} != D={self.d}"
            )
        if not np.allclose(cov, cov.T, atol=1e-9, rtol=0.0):
            raise ConfigError("covariance is not symmetric to 1e-9")
        mu.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)


def _cholesky_psd(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower-triangular factor of a PSD matrix, repairing float-level
    indefiniteness with escalating diagonal jitter.

    The exactly-zero matrix factors as L=0 with no jitter (degenerate fits and
    their draws stay exact). Escalation starts at 1e-6 * trace/d and doubles;
    exceeding trace * 1e-2 is a hard error.
    """
    if not np.any(cov):
        return np.zeros_like(cov), 0.0
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    trace = float(np.trace(cov))
    d = cov.shape[0]
    jitter = max(1e-6 * trace / d, 1e-300)
    cap = max(trace, 0.0) * _JITTER_CAP_FRAC
    eye = np.eye(d)
    while jitter <= cap:
        try:
            return np.linalg.cholesky(cov + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    raise NonPsdError(
        f"covariance not PSD after jitter escalation past {cap:.3e}"
    )


def fit_mvn(rows: np.ndarray, *, input_id: int = -1, sigma: float = 0.0) -> MvnParams:
    """Fit N(mu, Sigma) to embedding rows: column mean and unbiased (m-1
    divisor) sample covariance, accumulated in float64."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionMismatchError(f"expected m x D rows, got shape {rows.shape}")
    m, d = rows.shape
    if m < 2:
        raise InsufficientSamplesError(f"need at least 2 rows to fit, got {m}")
    mu = rows.mean(axis=0)
    centered = rows - mu
    cov = centered.T @ centered / (m - 1)
    cov = 0.5 * (cov + cov.T)
    _, jitter = _cholesky_psd(cov)
    return MvnParams(
        input_id=input_id,
        sigma=sigma,
        d=d,
        mu=mu,
        cov=cov,
        fit_sample_count=m,
        jitter_applied=jitter,
    )


def transform_mvn(head: PromptHead, mvn: MvnParams) -> MvnParams:
    """Push the fitted Gaussian through the prompt head: N(P mu, P Sigma P^T).

    The result lives in K-dim logit space; the product is symmetrized to kill
    float asymmetry.
    """
    if head.d != mvn.d:
        raise DimensionMismatchError(f"head D={head.d} != mvn D={mvn.d}")
    p = head.matrix.astype(np.float64)
    mu = p @ mvn.mu
    cov = p @ mvn.cov @ p.T
    cov = 0.5 * (cov + cov.T)
    return MvnParams(
        input_id=mvn.input_id,
        sigma=mvn.sigma,
        d=head.k,
        mu=mu,
        cov=cov,
        fit_sample_count=mvn.fit_sample_count,
        jitter_applied=0.0,
    )


def sample_mvn(mvn: MvnParams, count: int, seed: int) -> np.ndarray:
    """count x D draws: mean + L z with z standard normal from the seed."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    chol, _ = _cholesky_psd(mvn.cov)
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    z = rng.standard_normal((count, mvn.d))
    return mvn.mu + z @ chol.T


def write_mvn(mvn: MvnParams, path: str | Path) -> None:
    header = _OVCM_HEADER.pack(
        OVCM_MAGIC,
        FORMAT_VERSION,
        mvn.input_id,
        mvn.sigma,
        mvn.d,
        mvn.fit_sample_count,
        mvn.jitter_applied,
    )
    payload = (
        np.ascontiguousarray(mvn.mu, dtype="<f4").tobytes()
        + np.ascontiguousarray(mvn.cov, dtype="<f4").tobytes()
    )
    body = header + payload
    _atomic_write(path, body + _U64.pack(fnv1a64(body)))


def load_mvn(path: str | Path) -> MvnParams:
    blob = _read_file(path, "mvn parameter")
    _check_magic_version(blob, OVCM_MAGIC, path)
    if len(blob) < _OVCM_HEADER.size + 8:
        raise CacheCorruptError(f"{path}: truncated header")
    (_, _, input_id, sigma, d, fit_count, jitter) = _OVCM_HEADER.unpack_from(blob, 0)
    want = _OVCM_HEADER.size + (d + d * d) * 4 + 8
    if len(blob) != want:
        raise CacheCorruptError(
            f"{path}: payload truncated or oversized ({len(blob)} bytes, expected {want})"
        )
    _check_checksum(blob, path)
    mu = np.frombuffer(blob, dtype="<f4", count=d, offset=_OVCM_HEADER.size)
    cov = np.frombuffer(
        blob, dtype="<f4", count=d * d, offset=_OVCM_HEADER.size + d * 4
    ).reshape(d, d)
    # f32 storage can leave the matrix asymmetric at the last bit; re-symmetrize.
    cov = cov.astype(np.float64)
    cov = 0.5 * (cov + cov.T)
    return MvnParams(input_id, sigma, d, mu.astype(np.float64), cov, fit_count, jitter)


# ---------------------------------------------------------------------------
# OVCP: prompt head
# ---------------------------------------------------------------------------


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ConfigError(f"string too long to serialize ({len(raw)} bytes)")
    return _U16.pack(len(raw)) + raw


def _unpack_str(blob: bytes, offset: int, path) -> tuple[str, int]:
    if offset + 2 > len(blob):
        raise CacheCorruptError(f"{path}: truncated string length")
    (ln,) = _U16.unpack_from(blob, offset)
    offset += 2
    if offset + ln > len(blob):
        raise CacheCorruptError(f"{path}: truncated string payload")
    return blob[offset : offset + ln].decode("utf-8"), offset + ln


def write_prompt_head(head: PromptHead, path: str | Path) -> None:
    parts = [_OVCP_HEADER.pack(OVCP_MAGIC, FORMAT_VERSION, head.k, head.d)]
    parts.append(_pack_str(head.prompt_id))
    for label in head.class_labels:
        parts.append(_pack_str(label))
    parts.append(np.ascontiguousarray(head.matrix, dtype="<f4").tobytes())
    body = b"".join(parts)
    _atomic_write(path, body + _U64.pack(fnv1a64(body)))


def load_prompt_head(path: str | Path) -> PromptHead:
    blob = _read_file(path, "prompt head")
    _check_magic_version(blob, OVCP_MAGIC, path)
    _check_checksum(blob, path)
    (_, _, k, d) = _OVCP_HEADER.unpack_from(blob, 0)
    offset = _OVCP_HEADER.size
    prompt_id, offset = _unpack_str(blob, offset, path)
    labels = []
    for _ in range(k):
        label, offset = _unpack_str(blob, offset, path)
        labels.append(label)
    want = offset + k * d * 4 + 8
    if len(blob) != want:
        raise CacheCorruptError(
            f"{path}: rows truncated or oversized ({len(blob)} bytes, expected {want})"
        )
    rows = np.frombuffer(blob, dtype="<f4", count=k * d, offset=offset).reshape(k, d)
    return PromptHead(rows.copy(), labels, prompt_id)


# ---------------------------------------------------------------------------
# Certification metadata cache (line-delimited JSON for inspectability)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CertMetaEntry:
    prompt_id: str
    preds: np.ndarray  # first n_p estimation-draw predictions
    p_a_lower: float
    c_a: int

    def __post_init__(self) -> None:
        preds = np.asarray(self.preds, dtype=np.int32)
        preds.setflags(write=False)
        object.__setattr__(self, "preds", preds)


class CertMetaCache:
    """Per-input ledger of the noise master seed plus, for every known prompt,
    its first n_p estimation predictions, p_A lower bound, and top class."""

    def __init__(
        self,
        input_id: int,
        sigma: float,
        master_seed: int,
        chunk_size: int,
        est_chunk_offset: int,
    ):
        self.input_id = int(input_id)
        self.sigma = float(sigma)
        self.master_seed = int(master_seed) & MASK64
        self.chunk_size = int(chunk_size)
        self.est_chunk_offset = int(est_chunk_offset)
        self.entries: dict[str, CertMetaEntry] = {}
        self._lock = threading.Lock()

    @classmethod
    def for_stream(cls, input_id: int, stream: NoiseStream, n0: int) -> "CertMetaCache":
        return cls(
            input_id,
            stream.sigma,
            stream.master_seed,
            stream.chunk_size,
            selection_chunks(n0, stream.chunk_size),
        )

    def stream(self) -> NoiseStream:
        return NoiseStream(self.master_seed, self.sigma, self.chunk_size)

    def add_entry(
        self, prompt_id: str, preds: np.ndarray, p_a_lower: float, c_a: int
    ) -> None:
        entry = CertMetaEntry(prompt_id, preds, float(p_a_lower), int(c_a))
        with self._lock:
            if self.entries:
                have = len(next(iter(self.entries.values())).preds)
                if len(entry.preds) != have:
                    raise ConfigError(
                        f"trace length {len(entry.preds)} != existing {have}"
                    )
            self.entries[prompt_id] = entry

    def trace(self, prompt_id: str) -> PredictionTrace:
        entry = self.entries[prompt_id]
        return PredictionTrace(
            entry.preds, self.master_seed, self.sigma, self.est_chunk_offset
        )

    def check_stream(self, stream: NoiseStream) -> None:
        if (
            stream.master_seed != self.master_seed
            or stream.sigma != self.sigma
            or stream.chunk_size != self.chunk_size
        ):
            raise SeedMismatchError(
                "replay stream does not match the recorded master seed / sigma / chunking"
            )


def store_cert_meta(meta: CertMetaCache, path: str | Path) -> None:
    lines = [
        json.dumps(
            {
                "kind": "ovc-meta",
                "version": FORMAT_VERSION,
                "input_id": meta.input_id,
                "sigma": meta.sigma,
                "master_seed": meta.master_seed,
                "chunk_size": meta.chunk_size,
                "est_chunk_offset": meta.est_chunk_offset,
            },
            sort_keys=True,
        )
    ]
    for prompt_id in sorted(meta.entries):
        e = meta.entries[prompt_id]
        lines.append(
            json.dumps(
                {
                    "prompt_id": e.prompt_id,
                    "p_a_lower": e.p_a_lower,
                    "c_a": e.c_a,
                    "preds": e.preds.tolist(),
                },
                sort_keys=True,
            )
        )
    body = ("\n".join(lines) + "\n").encode("utf-8")
    footer = json.dumps(
        {"kind": "ovc-meta-end", "records": len(meta.entries), "checksum": f"{fnv1a64(body):016x}"}
    ).encode("utf-8")
    _atomic_write(path, body + footer + b"\n")


def load_cert_meta(path: str | Path) -> CertMetaCache:
    blob = _read_file(path, "certification metadata")
    text = blob.decode("utf-8")
    lines = text.splitlines()
    if len(lines) < 2:
        raise CacheCorruptError(f"{path}: missing header or footer line")
    try:
        header = json.loads(lines[0])
        footer = json.loads(lines[-1])
    except json.JSONDecodeError as exc:
        raise CacheCorruptError(f"{path}: malformed JSON line: {exc}") from exc
    if header.get("kind") != "ovc-meta":
        raise CacheCorruptError(f"{path}: magic mismatch in header kind")
    if header.get("version") != FORMAT_VERSION:
        raise CacheCorruptError(f"{path}: unsupported version {header.get('version')}")
    if footer.get("kind") != "ovc-meta-end":
        raise CacheCorruptError(f"{path}: footer line missing (truncated file?)")
    body = "\n".join(lines[:-1]) + "\n"
    actual = f"{fnv1a64(body.encode('utf-8')):016x}"
    if footer.get("checksum") != actual:
        raise CacheCorruptError(f"{path}: checksum mismatch in footer")
    if footer.get("records") != len(lines) - 2:
        raise CacheCorruptError(f"{path}: record count mismatch")
    meta = CertMetaCache(
        header["input_id"],
        header["sigma"],
        header["master_seed"],
        header["chunk_size"],
        header["est_chunk_offset"],
    )
    for line in lines[1:-1]:
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CacheCorruptError(f"{path}: malformed record line: {exc}") from exc
        meta.add_entry(
            rec["prompt_id"],
            np.asarray(rec["preds"], dtype=np.int32),
            rec["p_a_lower"],
            rec["c_a"],
        )
    return meta


def verify_cache_against_noise(cache: EmbeddingCache, x, enc: Encoder) -> bool:
    """Spot-check helper: re-derive the first selection chunk and compare."""
    stream = NoiseStream(cache.master_seed, cache.sigma, cache.chunk_size)
    rows = min(cache.chunk_size, cache.n0)
    noise = gaussian_chunk(stream, 0, enc.dim_in)[:rows]
    xv = x.x if hasattr(x, "x") else np.asarray(x, dtype=np.float64)
    fresh = enc.encode_batch(xv[None, :] + noise)
    return bool(np.array_equal(fresh, cache.rows[:rows]))
