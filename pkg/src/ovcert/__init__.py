"""Certification engine for zero-shot open-vocabulary classifiers.

Randomized-smoothing certificates with exact Clopper-Pearson bounds, plus
three accelerated paths for novel prompts: incremental reuse of known-prompt
certificates, replay of cached embeddings (bit-identical to the standard
path), and a heuristic multivariate-Gaussian approximation of the embedding
distribution.
"""

from .cache import (
    CertMetaCache,
    EmbeddingCache,
    MvnParams,
    build_embedding_cache,
    fit_mvn,
    load_cert_meta,
    load_embedding_cache,
    load_mvn,
    load_prompt_head,
    sample_mvn,
    store_cert_meta,
    transform_mvn,
    write_embedding_cache,
    write_mvn,
    write_prompt_head,
)
from .certify import (
    ABSTAIN,
    CertConfig,
    Certificate,
    IrsMatch,
    Method,
    certify_irs_base,
    certify_modified_irs,
    certify_mvn_ovc,
    certify_ovc,
    certify_standard,
    derive_master_seed,
    derive_mvn_seed,
    estimate_zeta,
    find_closest_known,
)
from .errors import (
    CacheCorruptError,
    CacheMissError,
    ConfigError,
    DimensionMismatchError,
    EmptyCacheError,
    EncoderUnavailableError,
    FingerprintMismatchError,
    InsufficientSamplesError,
    NonPsdError,
    OvcertError,
    SeedMismatchError,
)
from .model import (
    CacheOnlyEncoder,
    Encoder,
    InputPoint,
    Logits,
    PromptHead,
    SyntheticEncoder,
    logits,
    logits_batch,
    make_synthetic_family,
    predict,
    predict_batch,
    prompt_similarity,
)
from .noise import (
    ClassCounts,
    NoiseStream,
    PredictionTrace,
    cache_fingerprint,
    count_prediction,
    fnv1a64,
    gaussian_chunk,
    pred_under_noise,
    sample_under_noise,
    selection_chunks,
    splitmix64,
    trace_fingerprint,
)
from .stats import (
    ConfidenceParams,
    RadiusResult,
    inv_std_normal_cdf,
    lower_conf_bound,
    radius_irs,
    radius_one_sided,
    radius_two_sided,
    std_normal_cdf,
    upper_conf_bound,
)

__version__ = "0.1.0"
