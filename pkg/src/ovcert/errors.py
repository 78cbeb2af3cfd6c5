"""Exception hierarchy shared across the certification engine.

The CLI maps these onto exit codes: ConfigError -> 2, CacheMissError -> 3,
CacheCorruptError -> 4.
"""


class OvcertError(Exception):
    """Base class for all engine errors."""


class ConfigError(OvcertError, ValueError):
    """Invalid argument, invalid configuration, or precondition violation."""


class DimensionMismatchError(ConfigError):
    """Array shapes disagree with the declared dimensions."""


class InsufficientSamplesError(ConfigError):
    """Too few rows to fit the requested estimator."""


class EncoderUnavailableError(OvcertError):
    """Live encoding requested from a cache-only encoder."""


class CacheMissError(OvcertError):
    """A required cache file or cache entry does not exist."""


class EmptyCacheError(CacheMissError):
    """A certification metadata cache holds no prompt entries."""


class FingerprintMismatchError(OvcertError):
    """Cached data was produced under different noise parameters than requested."""


class SeedMismatchError(FingerprintMismatchError):
    """Replay stream disagrees with the master seed recorded in a cache."""


class CacheCorruptError(OvcertError):
    """A cache file failed an integrity check (magic, version, checksum, size)."""


class NonPsdError(OvcertError):
    """Covariance could not be factored even after jitter escalation."""
