"""Exact binomial confidence bounds, Gaussian quantile, and certified-radius formulas.

Everything here is a pure function; the certification algorithms are built on
top of these primitives and nothing else does statistics.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from scipy.special import betainc

from .errors import ConfigError

__all__ = [
    "ConfidenceParams",
    "RadiusResult",
    "lower_conf_bound",
    "upper_conf_bound",
    "inv_std_normal_cdf",
    "std_normal_cdf",
    "radius_one_sided",
    "radius_two_sided",
    "radius_irs",
]

# Absolute bisection tolerance for the Clopper-Pearson bounds.
_CP_TOL = 1e-10

# p_a_lower values that reach 1.0 numerically are clamped here; a finite-n
# Clopper-Pearson bound can never return 1 for alpha > 0, so hitting the clamp
# means float pathology upstream, not statistics.
_P_CLAMP = 1.0 - 1e-12


@dataclass(frozen=True)
class ConfidenceParams:
    """Failure-probability budget: alpha for the main bound, alpha_zeta for the
    disagreement bound reused by the incremental fast path."""

    alpha: float
    alpha_zeta: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.alpha_zeta < 0.0:
            raise ConfigError(f"alpha_zeta must be >= 0, got {self.alpha_zeta}")
        if self.alpha + self.alpha_zeta >= 1.0:
            raise ConfigError(
                f"alpha + alpha_zeta must be < 1, got {self.alpha + self.alpha_zeta}"
            )


@dataclass(frozen=True)
class RadiusResult:
    """Outcome of a radius computation: either a positive certified L2 radius or
    an abstention. ``p_a_lower`` is the effective lower bound the radius was
    computed from."""

    radius: float | None
    p_a_lower: float
    abstained: bool

    def __post_init__(self) -> None:
        if self.abstained and self.radius is not None:
            raise ConfigError("abstained result cannot carry a radius")
        if not self.abstained and (self.radius is None or self.radius <= 0.0):
            raise ConfigError("non-abstained result must carry a positive radius")


def _validate_counts(k: int, n: int, conf: float) -> None:
    if n < 1:
        raise ConfigError(f"trial count must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise ConfigError(f"success count must be in [0, {n}], got {k}")
    if not 0.0 < conf < 1.0:
        raise ConfigError(f"confidence must be in (0,1), got {conf}")


def lower_conf_bound(k: int, n: int, conf: float) -> float:
    """One-sided Clopper-Pearson lower bound.

    Returns L such that P(Binomial(n, L) >= k) = 1 - conf, i.e. the (1-conf)
    quantile of Beta(k, n-k+1). Computed by bisection on the regularized
    incomplete beta to absolute tolerance 1e-10; closed forms for k=0 and k=n.
    """
    k, n = int(k), int(n)
    _validate_counts(k, n, conf)
    if k == 0:
        return 0.0
    if k == n:
        return (1.0 - conf) ** (1.0 / n)
    # P(Bin(n,p) >= k) = I_p(k, n-k+1), increasing in p.
    target = 1.0 - conf
    lo, hi = 0.0, 1.0
    while hi - lo > _CP_TOL:
        mid = 0.5 * (lo + hi)
        if betainc(k, n - k + 1, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def upper_conf_bound(k: int, n: int, conf: float) -> float:
    """One-sided Clopper-Pearson upper bound.

    Returns U such that P(Binomial(n, U) <= k) = 1 - conf, i.e. the conf
    quantile of Beta(k+1, n-k). Closed forms for k=0 and k=n.
    """
    k, n = int(k), int(n)
    _validate_counts(k, n, conf)
    if k == n:
        return 1.0
    if k == 0:
        return 1.0 - (1.0 - conf) ** (1.0 / n)
    # P(Bin(n,p) <= k) = 1 - I_p(k+1, n-k), decreasing in p.
    target = conf
    lo, hi = 0.0, 1.0
    while hi - lo > _CP_TOL:
        mid = 0.5 * (lo + hi)
        if betainc(k + 1, n - k, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def std_normal_cdf(x: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


# Acklam's rational approximation coefficients for the initial guess.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _inv_cdf_lower_half(p: float) -> float:
    """Quantile for p in (0, 0.5]: rational initial guess plus two Newton steps."""
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    else:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    for _ in range(2):
        err = std_normal_cdf(x) - p
        pdf = math.exp(-0.5 * x * x) / _SQRT_2PI
        if pdf <= 0.0:
            break
        x -= err / pdf
    return x


def inv_std_normal_cdf(p: float) -> float:
    """Inverse standard normal CDF, |error| <= 1e-9 over (0, 1).

    Odd symmetry holds bitwise: the upper half is computed as the negated
    quantile of 1-p (exact in floats for p >= 0.5 by Sterbenz subtraction).
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"probability must be in (0,1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -_inv_cdf_lower_half(1.0 - p)
    return _inv_cdf_lower_half(p)


def _clamped(p_a_lower: float) -> float:
    if p_a_lower >= 1.0:
        warnings.warn(
            f"p_a_lower={p_a_lower} >= 1 clamped to {_P_CLAMP}; finite-n "
            "Clopper-Pearson bounds cannot produce this",
            RuntimeWarning,
            stacklevel=3,
        )
        return _P_CLAMP
    return p_a_lower


def radius_one_sided(p_a_lower: float, sigma: float) -> RadiusResult:
    """Practical certified radius sigma * Phi^-1(p_A); abstains for p_A <= 1/2."""
    if sigma <= 0.0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if p_a_lower < 0.0:
        raise ConfigError(f"p_a_lower must be >= 0, got {p_a_lower}")
    p = _clamped(p_a_lower)
    if p <= 0.5:
        return RadiusResult(None, p, True)
    return RadiusResult(sigma * inv_std_normal_cdf(p), p, False)


def radius_two_sided(p_a_lower: float, p_b_upper: float, sigma: float) -> RadiusResult:
    """Two-sided certified radius (sigma/2)(Phi^-1(p_A) - Phi^-1(p_B)).

    Reduces bitwise to the one-sided form when p_b_upper = 1 - p_a_lower.
    """
    if sigma <= 0.0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    if not 0.0 < p_b_upper < 1.0:
        raise ConfigError(f"p_b_upper must be in (0,1), got {p_b_upper}")
    if p_a_lower <= 0.0:
        raise ConfigError(f"p_a_lower must be > 0, got {p_a_lower}")
    p_a = _clamped(p_a_lower)
    if p_a <= p_b_upper:
        return RadiusResult(None, p_a, True)
    radius = (sigma / 2.0) * (inv_std_normal_cdf(p_a) - inv_std_normal_cdf(p_b_upper))
    return RadiusResult(radius, p_a, False)


def radius_irs(p_a_lower: float, zeta: float, sigma: float) -> RadiusResult:
    """Incremental-reuse radius sigma * Phi^-1(p_A - zeta_x).

    zeta is the upper confidence bound on the disagreement probability between
    the matched known classifier and the novel one; zeta = 0 reduces bitwise to
    radius_one_sided.
    """
    if not 0.0 <= zeta <= 1.0:
        raise ConfigError(f"zeta must be in [0,1], got {zeta}")
    if p_a_lower < 0.0:
        raise ConfigError(f"p_a_lower must be >= 0, got {p_a_lower}")
    effective = p_a_lower - zeta
    return radius_one_sided(max(effective, 0.0), sigma)
