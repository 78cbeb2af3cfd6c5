"""Open-vocabulary classifier pieces: encoders mapping inputs to embeddings and
linear prompt heads mapping embeddings to logits.

Embeddings are float32 by contract (matching how deep-model features are
stored); the prompt-head projection is float32 x float32 so that predictions
computed live and predictions computed from cached rows are bitwise identical.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatchError, EncoderUnavailableError

EMB_DTYPE = np.float32

_NONLINEARITIES = {
    "tanh": np.tanh,
    "relu": lambda a: np.maximum(a, 0.0),
    "identity": lambda a: a,
}


@dataclass(frozen=True)
class InputPoint:
    """One certification input: an index and a vector in the certified space."""

    id: int
    x: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim != 1:
            raise ConfigError(f"input must be a vector, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ConfigError(f"input {self.id} has non-finite entries")
        object.__setattr__(self, "x", x)


class PromptHead:
    """K x D matrix of unit-norm prompt embeddings acting as a linear classifier."""

    def __init__(self, matrix: np.ndarray, class_labels: list[str], prompt_id: str):
        m = np.asarray(matrix, dtype=EMB_DTYPE)
        if m.ndim != 2 or m.shape[0] < 2:
            raise ConfigError(f"prompt head needs a K x D matrix with K >= 2, got {m.shape}")
        if len(class_labels) != m.shape[0]:
            raise DimensionMismatchError(
                f"{len(class_labels)} labels for {m.shape[0]} prompt rows"
            )
        norms = np.linalg.norm(m.astype(np.float64), axis=1)
        bad = np.abs(norms - 1.0) > 1e-6
        if np.any(bad):
            raise ConfigError(
                f"prompt rows {np.nonzero(bad)[0].tolist()} are not unit norm"
            )
        m.setflags(write=False)
        self.matrix = m
        self.class_labels = list(class_labels)
        self.prompt_id = str(prompt_id)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def __repr__(self) -> str:
        return f"PromptHead({self.prompt_id!r}, K={self.k}, D={self.d})"


@dataclass(frozen=True)
class Logits:
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values))


class Encoder:
    """Base class: deterministic map from inputs to D-dim embeddings with a
    race-free monotone invocation counter (one count per encoded sample)."""

    def __init__(self, dim_in: int, dim_out: int):
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self._count = 0
        self._count_lock = threading.Lock()

    @property
    def eval_counter(self) -> int:
        return self._count

    def _bump(self, m: int) -> None:
        with self._count_lock:
            self._count += m

    def _check_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.dim_in:
            raise DimensionMismatchError(
                f"expected batch of {self.dim_in}-vectors, got shape {xs.shape}"
            )
        return xs

    def encode_batch(self, xs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise DimensionMismatchError(f"expected a vector, got shape {x.shape}")
        return self.encode_batch(x[None, :])[0]


class SyntheticEncoder(Encoder):
    """Seeded MLP encoder for desk-scale experiments.

    Default architecture: dim_in -> 64 -> dim_out with tanh after each layer,
    weights ~ N(0, gain^2/fan_in) from the weight seed, zero biases. gain < 1
    keeps pre-activations in the near-linear zone of the nonlinearity;
    pad_per_call adds that many seconds of sleep per encoded sample to emulate
    an expensive backbone in benchmarks.
    """

    def __init__(
        self,
        dim_in: int,
        dim_out: int,
        hidden: tuple[int, ...] = (64,),
        nonlinearity: str = "tanh",
        weight_seed: int = 0,
        gain: float = 1.0,
        pad_per_call: float = 0.0,
    ):
        super().__init__(dim_in, dim_out)
        if nonlinearity not in _NONLINEARITIES:
            raise ConfigError(f"unknown nonlinearity {nonlinearity!r}")
        if gain <= 0.0:
            raise ConfigError(f"gain must be > 0, got {gain}")
        self.hidden = tuple(int(h) for h in hidden)
        self.nonlinearity = nonlinearity
        self.weight_seed = int(weight_seed)
        self.gain = float(gain)
        self.pad_per_call = float(pad_per_call)
        rng = np.random.Generator(np.random.PCG64(self.weight_seed))
        widths = (self.dim_in, *self.hidden, self.dim_out)
        self._weights = [
            self.gain * rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        ]
        for w in self._weights:
            w.setflags(write=False)

    @classmethod
    def identity(cls, dim: int) -> "SyntheticEncoder":
        enc = cls(dim, dim, hidden=(), nonlinearity="identity", weight_seed=0)
        enc._weights = [np.eye(dim)]
        enc._weights[0].setflags(write=False)
        return enc

    @property
    def kind(self) -> dict:
        return {
            "type": "synthetic",
            "hidden": list(self.hidden),
            "nonlinearity": self.nonlinearity,
            "weight_seed": self.weight_seed,
            "gain": self.gain,
        }

    def encode_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = self._check_batch(xs)
        act = _NONLINEARITIES[self.nonlinearity]
        h = xs
        for w in self._weights:
            h = act(h @ w)
        if self.pad_per_call > 0.0:
            time.sleep(self.pad_per_call * xs.shape[0])
        self._bump(xs.shape[0])
        return h.astype(EMB_DTYPE)


class CacheOnlyEncoder(Encoder):
    """Marker encoder for flows that must never touch a live model."""

    kind = {"type": "cache-only"}

    def encode_batch(self, xs: np.ndarray) -> np.ndarray:
        raise EncoderUnavailableError(
            "encoder is cache-only; live encoding is not available"
        )


def logits(head: PromptHead, emb: np.ndarray) -> Logits:
    """Raw dot products between the prompt rows and one embedding."""
    emb = np.asarray(emb, dtype=EMB_DTYPE)
    if emb.shape != (head.d,):
        raise DimensionMismatchError(f"embedding shape {emb.shape} != ({head.d},)")
    return Logits(head.matrix @ emb)


def logits_batch(head: PromptHead, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=EMB_DTYPE)
    if rows.ndim != 2 or rows.shape[1] != head.d:
        raise DimensionMismatchError(f"rows shape {rows.shape} incompatible with D={head.d}")
    return rows @ head.matrix.T


def predict(head: PromptHead, emb: np.ndarray) -> int:
    """Argmax class; exact ties break toward the lowest class index."""
    return int(np.argmax(logits(head, emb).values))


def predict_batch(head: PromptHead, rows: np.ndarray) -> np.ndarray:
    return np.argmax(logits_batch(head, rows), axis=1).astype(np.int32)


def prompt_similarity(a: PromptHead, b: PromptHead) -> float:
    """Cosine similarity of the row-concatenated prompt matrices."""
    if a.k != b.k or a.d != b.d:
        raise DimensionMismatchError(
            f"prompt shapes differ: {a.k}x{a.d} vs {b.k}x{b.d}"
        )
    va = a.matrix.astype(np.float64).reshape(-1)
    vb = b.matrix.astype(np.float64).reshape(-1)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ConfigError("zero-vector prompt concatenation")
    return float(np.dot(va, vb) / (na * nb))


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ConfigError("cannot normalize a zero prompt row")
    return m / norms


def make_synthetic_family(
    seed: int, n_prompts: int, k: int, d: int, jitter: float
) -> list[PromptHead]:
    """A base random unit-row head plus jittered, re-normalized variants.

    Pairwise similarity shrinks as jitter grows; jitter 0 reproduces the base
    head under every prompt id.
    """
    if n_prompts < 2:
        raise ConfigError(f"need at least 2 prompts, got {n_prompts}")
    if jitter < 0.0:
        raise ConfigError(f"jitter must be >= 0, got {jitter}")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = [f"class-{j}" for j in range(k)]
    base = _unit_rows(rng.standard_normal((k, d)))
    heads = [PromptHead(base, labels, "prompt-000")]
    for i in range(1, n_prompts):
        variant = _unit_rows(base + jitter * rng.standard_normal((k, d)))
        heads.append(PromptHead(variant, labels, f"prompt-{i:03d}"))
    return heads
