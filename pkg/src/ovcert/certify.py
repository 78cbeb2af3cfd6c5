"""The certification algorithms: standard randomized smoothing, the
incremental fast path over known-prompt metadata, cached-embedding replay, and
the Gaussian-approximation heuristic.

All four share one decision core (selection counts pick the class, estimation
counts bound p_A, radius sigma * Phi^-1(p_A)) so that the cached path is
bitwise identical to the standard path by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .cache import CertMetaCache, EmbeddingCache, MvnParams, sample_mvn, transform_mvn
from .errors import (
    CacheMissError,
    ConfigError,
    DimensionMismatchError,
    EmptyCacheError,
    FingerprintMismatchError,
)
from .model import Encoder, PromptHead
from .noise import (
    ClassCounts,
    NoiseStream,
    PredictionTrace,
    count_prediction,
    pred_under_noise,
    sample_under_noise,
    selection_chunks,
    splitmix64,
)
from .stats import ConfidenceParams, lower_conf_bound, radius_irs, radius_one_sided, upper_conf_bound

ABSTAIN = -1


class Method(str, Enum):
    STANDARD = "STANDARD"
    MODIFIED_IRS_FAST = "MODIFIED_IRS_FAST"
    MODIFIED_IRS_FALLBACK = "MODIFIED_IRS_FALLBACK"
    OVC = "OVC"
    MVN_OVC = "MVN_OVC"
    IRS_BASE_ZETA = "IRS_BASE_ZETA"
    IRS_BASE_REESTIMATE = "IRS_BASE_REESTIMATE"


@dataclass(frozen=True)
class CertConfig:
    """Sample counts and failure budgets for one certification run.

    n defaults to the desk-scale 10K; full-scale runs use 100K. n_p is the
    prediction-trace length used to match prompts and must divide evenly into
    noise chunks (see ConfigError below).
    """

    sigma: float
    n0: int = 100
    n: int = 10_000
    n_p: int = 10_000
    alpha: float = 0.001
    alpha_zeta: float = 0.001
    gamma: float = 0.01

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.n0 < 1 or self.n < 1 or self.n_p < 1:
            raise ConfigError("n0, n, n_p must all be >= 1")
        if self.n_p > self.n:
            raise ConfigError(f"n_p ({self.n_p}) must be <= n ({self.n})")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must be in (0,1), got {self.gamma}")
        ConfidenceParams(self.alpha, self.alpha_zeta)

    @property
    def confidence_standard(self) -> float:
        return 1.0 - self.alpha

    @property
    def confidence_incremental(self) -> float:
        return 1.0 - self.alpha - self.alpha_zeta


@dataclass(frozen=True)
class Certificate:
    """One certification outcome. predicted_class is ABSTAIN (-1) when the
    algorithm declined to certify; radius is None exactly then."""

    input_id: int
    prompt_id: str
    predicted_class: int
    radius: float | None
    p_a_lower: float
    confidence: float
    method: Method
    samples_used: int
    encoder_calls: int
    wall_time: float
    heuristic: bool = False

    @property
    def abstained(self) -> bool:
        return self.predicted_class == ABSTAIN


@dataclass(frozen=True)
class IrsMatch:
    """Closest known prompt by prediction disagreement over the first n_p
    replayed draws."""

    sim_prompt_id: str
    disagreement_count: int
    n_p: int
    zeta_x: float

    def __post_init__(self) -> None:
        if self.zeta_x < self.disagreement_count / self.n_p:
            raise ConfigError(
                "zeta_x below the raw disagreement fraction; bound is invalid"
            )


def _require_chunk_aligned(n_p: int, chunk_size: int) -> None:
    if n_p % chunk_size != 0:
        raise ConfigError(
            f"n_p ({n_p}) must be a multiple of the noise chunk size "
            f"({chunk_size}) so replayed prediction traces are batch-aligned"
        )


def _check_stream(cfg: CertConfig, stream: NoiseStream) -> None:
    if cfg.sigma != stream.sigma:
        raise ConfigError(f"config sigma {cfg.sigma} != stream sigma {stream.sigma}")


def _decide(
    counts0: ClassCounts,
    counts: ClassCounts,
    cfg: CertConfig,
    alpha: float,
    p_a_scale: float = 1.0,
) -> tuple[int, float, object]:
    """Shared decision rule: top class from the selection draw, Clopper-Pearson
    lower bound from the estimation draw, one-sided radius."""
    c_hat = counts0.top_class
    p_a = lower_conf_bound(int(counts.counts[c_hat]), counts.total, 1.0 - alpha)
    if p_a_scale != 1.0:
        p_a = p_a_scale * p_a
    rr = radius_one_sided(p_a, cfg.sigma)
    predicted = ABSTAIN if rr.abstained else c_hat
    return predicted, p_a, rr


def certify_standard(
    enc: Encoder,
    head: PromptHead,
    x,
    cfg: CertConfig,
    stream: NoiseStream,
    meta: CertMetaCache | None = None,
) -> Certificate:
    """Plain randomized-smoothing certification with disjoint selection and
    estimation draws. When a metadata cache is supplied, the first n_p
    estimation predictions plus (p_A, c_A) are recorded for later incremental
    certification of other prompts."""
    return _certify_full(enc, head, x, cfg, stream, cfg.alpha, Method.STANDARD, meta)


def _certify_full(
    enc: Encoder,
    head: PromptHead,
    x,
    cfg: CertConfig,
    stream: NoiseStream,
    alpha: float,
    method: Method,
    meta: CertMetaCache | None = None,
    est_prefix: PredictionTrace | None = None,
    extra_calls: int = 0,
    t_start: float | None = None,
) -> Certificate:
    t0 = time.perf_counter() if t_start is None else t_start
    _check_stream(cfg, stream)
    calls_before = enc.eval_counter
    c0 = selection_chunks(cfg.n0, stream.chunk_size)

    counts0 = sample_under_noise(enc, head, x, cfg.n0, stream, chunk_offset=0)

    if est_prefix is None:
        trace = pred_under_noise(enc, head, x, cfg.n, stream, chunk_offset=c0)
    else:
        # Reuse already-computed predictions as the first draws of the
        # estimation phase; valid because they came from the same chunks the
        # full run would use, and chunk alignment makes the reuse bitwise.
        if est_prefix.chunk_offset != c0:
            raise ConfigError("estimation prefix was taken at a different chunk offset")
        _require_chunk_aligned(len(est_prefix), stream.chunk_size)
        done = len(est_prefix)
        if done > cfg.n:
            raise ConfigError("estimation prefix longer than n")
        if done < cfg.n:
            rest = pred_under_noise(
                enc, head, x, cfg.n - done, stream,
                chunk_offset=c0 + done // stream.chunk_size,
            )
            preds = np.concatenate([est_prefix.preds, rest.preds])
        else:
            preds = est_prefix.preds
        trace = PredictionTrace(preds, stream.master_seed, stream.sigma, c0)

    counts = trace.to_counts(head.k)
    predicted, p_a, rr = _decide(counts0, counts, cfg, alpha)

    if meta is not None:
        meta.check_stream(stream)
        _require_chunk_aligned(cfg.n_p, stream.chunk_size)
        meta.add_entry(head.prompt_id, trace.preds[: cfg.n_p], p_a, counts0.top_class)

    input_id = x.id if hasattr(x, "id") else -1
    return Certificate(
        input_id=input_id,
        prompt_id=head.prompt_id,
        predicted_class=predicted,
        radius=rr.radius,
        p_a_lower=p_a,
        confidence=1.0 - alpha,
        method=method,
        samples_used=cfg.n0 + cfg.n,
        encoder_calls=enc.eval_counter - calls_before + extra_calls,
        wall_time=time.perf_counter() - t0,
    )


def estimate_zeta(
    trace_novel: PredictionTrace,
    trace_known: PredictionTrace,
    n_p: int,
    alpha_zeta: float,
) -> float:
    """Upper confidence bound on the disagreement probability between two
    classifiers evaluated on the same replayed noise."""
    if len(trace_novel) < n_p or len(trace_known) < n_p:
        raise ConfigError(
            f"both traces must cover n_p={n_p} draws, got "
            f"{len(trace_novel)} and {len(trace_known)}"
        )
    if (
        trace_novel.prefix(n_p).stream_fingerprint
        != trace_known.prefix(n_p).stream_fingerprint
    ):
        raise FingerprintMismatchError(
            "prediction traces come from different noise streams"
        )
    diff = int(np.sum(trace_novel.preds[:n_p] != trace_known.preds[:n_p]))
    return upper_conf_bound(diff, n_p, 1.0 - alpha_zeta)


def find_closest_known(
    meta: CertMetaCache, trace_novel: PredictionTrace, n_p: int, alpha_zeta: float
) -> IrsMatch:
    """Known prompt minimizing exact disagreement over the first n_p replayed
    predictions; ties break toward the lower prompt id."""
    if not meta.entries:
        raise EmptyCacheError(f"no known-prompt entries for input {meta.input_id}")
    novel = trace_novel.preds[:n_p]
    best_id, best_diff = None, None
    for prompt_id in sorted(meta.entries):
        preds = meta.entries[prompt_id].preds
        if len(preds) < n_p:
            raise ConfigError(
                f"cached trace for {prompt_id} has {len(preds)} < n_p={n_p} entries"
            )
        diff = int(np.sum(preds[:n_p] != novel))
        if best_diff is None or diff < best_diff:
            best_id, best_diff = prompt_id, diff
    zeta = upper_conf_bound(best_diff, n_p, 1.0 - alpha_zeta)
    return IrsMatch(best_id, best_diff, n_p, zeta)


def certify_modified_irs(
    enc: Encoder,
    head_novel: PromptHead,
    x,
    cfg: CertConfig,
    meta: CertMetaCache,
    stream: NoiseStream | None = None,
) -> Certificate:
    """Incremental certification of a novel prompt against per-input metadata.

    Replays n_p noise draws to find the known prompt most similar in
    prediction; if the disagreement fraction is within gamma, reuses that
    prompt's (p_A, c_A) at radius sigma * Phi^-1(p_A - zeta_x), otherwise falls
    back to a full certification at confidence 1 - (alpha + alpha_zeta),
    reusing the n_p predictions already computed.
    """
    t0 = time.perf_counter()
    if not meta.entries:
        raise EmptyCacheError(f"no known-prompt entries for input {meta.input_id}")
    replay = meta.stream()
    if stream is not None:
        meta.check_stream(stream)
    _check_stream(cfg, replay)
    _require_chunk_aligned(cfg.n_p, replay.chunk_size)
    c0 = selection_chunks(cfg.n0, replay.chunk_size)
    if c0 != meta.est_chunk_offset:
        raise FingerprintMismatchError(
            f"config n0={cfg.n0} implies estimation offset {c0}, cache recorded "
            f"{meta.est_chunk_offset}"
        )

    calls_before = enc.eval_counter
    trace_novel = pred_under_noise(enc, head_novel, x, cfg.n_p, replay, chunk_offset=c0)
    match = find_closest_known(meta, trace_novel, cfg.n_p, cfg.alpha_zeta)

    if match.disagreement_count / cfg.n_p > cfg.gamma:
        cert = _certify_full(
            enc, head_novel, x, cfg, replay,
            alpha=cfg.alpha + cfg.alpha_zeta,
            method=Method.MODIFIED_IRS_FALLBACK,
            est_prefix=trace_novel,
            extra_calls=cfg.n_p,
            t_start=t0,
        )
        return cert

    entry = meta.entries[match.sim_prompt_id]
    rr = radius_irs(entry.p_a_lower, match.zeta_x, cfg.sigma)
    input_id = x.id if hasattr(x, "id") else -1
    return Certificate(
        input_id=input_id,
        prompt_id=head_novel.prompt_id,
        predicted_class=ABSTAIN if rr.abstained else entry.c_a,
        radius=rr.radius,
        p_a_lower=rr.p_a_lower,
        confidence=cfg.confidence_incremental,
        method=Method.MODIFIED_IRS_FAST,
        samples_used=cfg.n_p,
        encoder_calls=enc.eval_counter - calls_before,
        wall_time=time.perf_counter() - t0,
    )


def certify_ovc(
    head_novel: PromptHead, x_id: int, cfg: CertConfig, cache: EmbeddingCache
) -> Certificate:
    """Certification from cached embeddings: zero encoder invocations, output
    bitwise identical to certify_standard under the same stream."""
    t0 = time.perf_counter()
    if cache.input_id != x_id:
        raise CacheMissError(
            f"embedding cache is for input {cache.input_id}, not {x_id}"
        )
    if cache.sigma != cfg.sigma or cache.n0 != cfg.n0 or cache.n != cfg.n:
        raise FingerprintMismatchError(
            f"cache built under (sigma={cache.sigma}, n0={cache.n0}, n={cache.n}), "
            f"requested (sigma={cfg.sigma}, n0={cfg.n0}, n={cfg.n})"
        )
    if head_novel.d != cache.d:
        raise DimensionMismatchError(f"head D={head_novel.d} != cache D={cache.d}")
    counts0, counts = count_prediction(
        cache.rows, head_novel, cfg.n0, cfg.n, block=cache.chunk_size
    )
    predicted, p_a, rr = _decide(counts0, counts, cfg, cfg.alpha)
    return Certificate(
        input_id=x_id,
        prompt_id=head_novel.prompt_id,
        predicted_class=predicted,
        radius=rr.radius,
        p_a_lower=p_a,
        confidence=cfg.confidence_standard,
        method=Method.OVC,
        samples_used=cfg.n0 + cfg.n,
        encoder_calls=0,
        wall_time=time.perf_counter() - t0,
    )


# Heuristic correction: scale the Clopper-Pearson bound down by 1% before the
# abstain test and radius.
MVN_P_A_SCALE = 0.99


def certify_mvn_ovc(
    head_novel: PromptHead,
    x_id: int,
    cfg: CertConfig,
    mvn: MvnParams,
    sample_seed: int,
) -> Certificate:
    """Heuristic certification from the fitted Gaussian: transform to logit
    space N(P mu, P Sigma P^T), draw n0+n logit rows, run the standard decision
    rule with the p_A bound scaled by 0.99. Not a sound certificate; tagged
    heuristic."""
    t0 = time.perf_counter()
    if mvn is None:
        raise CacheMissError(f"no fitted mvn for input {x_id}")
    if mvn.input_id != x_id:
        raise CacheMissError(f"mvn parameters are for input {mvn.input_id}, not {x_id}")
    if mvn.sigma != cfg.sigma:
        raise FingerprintMismatchError(
            f"mvn fitted at sigma={mvn.sigma}, requested sigma={cfg.sigma}"
        )
    logit_mvn = transform_mvn(head_novel, mvn)
    rows = sample_mvn(logit_mvn, cfg.n0 + cfg.n, sample_seed)
    preds = np.argmax(rows, axis=1)
    counts0 = ClassCounts(np.bincount(preds[: cfg.n0], minlength=head_novel.k), cfg.n0)
    counts = ClassCounts(np.bincount(preds[cfg.n0 :], minlength=head_novel.k), cfg.n)
    predicted, p_a, rr = _decide(counts0, counts, cfg, cfg.alpha, p_a_scale=MVN_P_A_SCALE)
    return Certificate(
        input_id=x_id,
        prompt_id=head_novel.prompt_id,
        predicted_class=predicted,
        radius=rr.radius,
        p_a_lower=p_a,
        confidence=cfg.confidence_standard,
        method=Method.MVN_OVC,
        samples_used=cfg.n0 + cfg.n,
        encoder_calls=0,
        wall_time=time.perf_counter() - t0,
        heuristic=True,
    )


def certify_irs_base(
    enc: Encoder,
    head_approx: PromptHead,
    x,
    cfg: CertConfig,
    meta: CertMetaCache,
    known_prompt_id: str | None = None,
    p_a_threshold: float = 0.99,
) -> Certificate:
    """The original incremental-smoothing skeleton, kept for regression against
    the modified algorithm: below the p_A threshold, bound the disagreement
    with the single cached base prompt; above it, re-estimate p_A directly from
    n_p fresh replayed samples at confidence 1 - (alpha + alpha_zeta)."""
    t0 = time.perf_counter()
    if not meta.entries:
        raise EmptyCacheError(f"no known-prompt entries for input {meta.input_id}")
    if known_prompt_id is None:
        if len(meta.entries) != 1:
            raise ConfigError(
                "metadata holds multiple prompts; pass known_prompt_id explicitly"
            )
        known_prompt_id = next(iter(meta.entries))
    if known_prompt_id not in meta.entries:
        raise CacheMissError(f"no cached entry for prompt {known_prompt_id}")
    entry = meta.entries[known_prompt_id]
    replay = meta.stream()
    _check_stream(cfg, replay)
    _require_chunk_aligned(cfg.n_p, replay.chunk_size)
    c0 = meta.est_chunk_offset

    calls_before = enc.eval_counter
    input_id = x.id if hasattr(x, "id") else -1

    if entry.p_a_lower < p_a_threshold:
        trace_novel = pred_under_noise(enc, head_approx, x, cfg.n_p, replay, chunk_offset=c0)
        zeta = estimate_zeta(
            trace_novel, meta.trace(known_prompt_id).prefix(cfg.n_p), cfg.n_p, cfg.alpha_zeta
        )
        rr = radius_irs(entry.p_a_lower, zeta, cfg.sigma)
        predicted = ABSTAIN if rr.abstained else entry.c_a
        p_a = rr.p_a_lower
        method = Method.IRS_BASE_ZETA
    else:
        counts = sample_under_noise(enc, head_approx, x, cfg.n_p, replay, chunk_offset=c0)
        p_a = lower_conf_bound(
            int(counts.counts[entry.c_a]), cfg.n_p,
            1.0 - (cfg.alpha + cfg.alpha_zeta),
        )
        rr = radius_one_sided(p_a, cfg.sigma)
        predicted = ABSTAIN if rr.abstained else entry.c_a
        method = Method.IRS_BASE_REESTIMATE

    return Certificate(
        input_id=input_id,
        prompt_id=head_approx.prompt_id,
        predicted_class=predicted,
        radius=rr.radius,
        p_a_lower=p_a,
        confidence=cfg.confidence_incremental,
        method=method,
        samples_used=cfg.n_p,
        encoder_calls=enc.eval_counter - calls_before,
        wall_time=time.perf_counter() - t0,
    )


def derive_master_seed(base_seed: int, input_id: int) -> int:
    """Per-input master seed: one fixed mix of the run seed and the input id so
    every prompt certification for an input replays identical noise."""
    return splitmix64(base_seed, input_id)


def derive_mvn_seed(master_seed: int, prompt_id: str) -> int:
    """Deterministic Gaussian-sampler seed per (input, prompt)."""
    from .noise import fnv1a64

    return splitmix64(master_seed, fnv1a64(prompt_id.encode("utf-8")))
