"""Resampling schemes and the rules deciding when to resample.

Two schemes are provided: multinomial (bootstrap) resampling, which draws i.i.d.
parent indices, and residual Bernoulli resampling, which keeps
``floor(M V_i)`` copies of particle ``i`` plus one more with probability equal
to the fractional part and lets the population size drift.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InvalidConfigurationError

_NORMALIZATION_TOL = 1e-9


class Scheme(str, enum.Enum):
    MULTINOMIAL = "multinomial"
    RESIDUAL = "residual"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        aliases = {"bootstrap": cls.MULTINOMIAL, "boot": cls.MULTINOMIAL,
                   "resid": cls.RESIDUAL, "residual-bernoulli": cls.RESIDUAL}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise InvalidConfigurationError(f"unknown resampling scheme {value!r}") from None


@dataclass(frozen=True)
class Always:
    """Resample after every stage except the last."""

    @property
    def threshold(self) -> float:
        return 0.0


@dataclass(frozen=True)
class Never:
    """Plain sequential importance sampling."""

    @property
    def threshold(self) -> float:
        return math.inf


@dataclass(frozen=True)
class CvThreshold:
    """Resample when the squared coefficient of variation reaches ``c``."""

    c: float

    def __post_init__(self):
        if not self.c >= 0:
            raise InvalidConfigurationError(f"cv^2 threshold must be nonnegative, got {self.c}")

    @property
    def threshold(self) -> float:
        return float(self.c)


ResamplePolicy = Always | Never | CvThreshold


def parse_policy(value) -> ResamplePolicy:
    """Map ``"always"``, ``"never"``, ``inf`` or a number to a policy."""
    if isinstance(value, (Always, Never, CvThreshold)):
        return value
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "always":
            return Always()
        if key in ("never", "inf", "infinity", "none"):
            return Never()
        try:
            value = float(key)
        except ValueError:
            raise InvalidConfigurationError(f"unknown resampling policy {value!r}") from None
    c = float(value)
    if math.isinf(c) and c > 0:
        return Never()
    return CvThreshold(c)


def check_normalized(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 1 or weights.size == 0:
        raise ContractViolationError("weights must be a nonempty vector")
    if np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise ContractViolationError("weights must be finite and nonnegative")
    total = math.fsum(weights)
    if abs(total - 1.0) > _NORMALIZATION_TOL:
        raise ContractViolationError(f"weights sum to {total!r}, not 1")
    return weights


def log_normalize(log_weights) -> np.ndarray:
    """Normalized weights from log weights, subtracting the maximum first."""
    log_weights = np.asarray(log_weights, dtype=float)
    top = np.max(log_weights)
    if not np.isfinite(top):
        raise ContractViolationError("all weights are zero")
    w = np.exp(log_weights - top)
    return w / w.sum()


def cv_squared(weights) -> float:
    """``m^{-1} sum (m V_i)^2 - 1`` for a probability vector ``V``.

    >>> cv_squared([0.25, 0.75])
    0.25
    """
    v = check_normalized(weights)
    m = v.size
    return max(0.0, m * float(np.dot(v, v)) - 1.0)


def cv_squared_unnormalized(weights) -> float:
    """Same quantity computed as ``sum (v_i - vbar)^2 / (m vbar^2)``."""
    v = np.asarray(weights, dtype=float)
    vbar = v.mean()
    return float(np.sum((v - vbar) ** 2) / (v.size * vbar**2))


def gamma_fn(x) -> float:
    """``(x - floor x)(1 - x + floor x) / x``, the variance factor of residual copies.

    ``Var(floor(x) + Bernoulli(x - floor(x))) = gamma_fn(x) * x``.
    """
    x = float(x)
    if not x > 0:
        raise ValueError(f"gamma_fn is defined for x > 0, got {x}")
    frac = x - math.floor(x)
    return frac * (1.0 - frac) / x


def multinomial_counts(weights, m: int, rng: np.random.Generator):
    """Draw ``m`` i.i.d. parent indices with ``P(B = j) = V_j``.

    Returns
    -------
    counts : ndarray of int
        Offspring count of each particle; ``counts.sum() == m``.
    parents : ndarray of int
        The parent draws ``B^1, ..., B^m`` in draw order.
    """
    v = check_normalized(weights)
    if m < 1:
        raise InvalidConfigurationError("need at least one offspring")
    parents = _inverse_cdf(v, rng.random(m))
    return np.bincount(parents, minlength=v.size), parents


def _inverse_cdf(v, u):
    cdf = np.cumsum(v)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    # zero-weight tail entries share cdf == 1; u < 1 never lands on them
    return np.minimum(idx, v.size - 1)


def residual_bernoulli_counts(weights, M: int, rng: np.random.Generator) -> np.ndarray:
    """``floor(M V_i) + xi_i`` with independent ``xi_i ~ Bernoulli(M V_i - floor(M V_i))``.

    The expected count of particle ``i`` is exactly ``M V_i``; the total may
    differ from ``M`` and can be zero.
    """
    v = check_normalized(weights)
    target = M * v
    base = np.floor(target)
    frac = target - base
    extra = rng.random(v.size) < frac
    return base.astype(np.int64) + extra


def counts_for(scheme: Scheme, weights, size: int, rng: np.random.Generator) -> np.ndarray:
    if Scheme.parse(scheme) is Scheme.RESIDUAL:
        return residual_bernoulli_counts(weights, size, rng)
    return multinomial_counts(weights, size, rng)[0]


def should_resample(policy: ResamplePolicy, weights, stage: int, horizon: int) -> bool:
    """Decide whether to resample after ``stage``; never at the final stage."""
    if stage >= horizon:
        return False
    if isinstance(policy, Always):
        return True
    if isinstance(policy, Never):
        return False
    return cv_squared(weights) >= policy.c


def group_sizes(m: int, k: int) -> np.ndarray:
    """Sizes of ``k`` groups: ``floor(m / k)`` each, the last absorbing the remainder."""
    if k < 1:
        raise InvalidConfigurationError("need at least one group")
    if k > m:
        raise InvalidConfigurationError(f"cannot split {m} particles into {k} groups")
    sizes = np.full(k, m // k, dtype=np.int64)
    sizes[-1] += m - sizes.sum()
    return sizes


def stratified_group_counts(weights, k: int, rng: np.random.Generator,
                            scheme: Scheme = Scheme.MULTINOMIAL) -> np.ndarray:
    """Resample independently inside each of ``k`` contiguous groups.

    ``weights`` are the unnormalized weights of all particles; they are
    normalized within each group and every group keeps its own size (or, for
    the residual scheme, its own expected size).
    """
    w = np.asarray(weights, dtype=float)
    sizes = group_sizes(w.size, k)
    counts = []
    start = 0
    for size in sizes:
        block = w[start:start + size]
        counts.append(counts_for(scheme, block / block.sum(), int(size), rng))
        start += size
    return np.concatenate(counts)
