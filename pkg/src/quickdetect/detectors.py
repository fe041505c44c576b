"""Scores, Gaussian log-likelihood ratios and the CUSUM / Shiryaev-Roberts recursions.

Both detectors consume an increment per observation: either a true
log-likelihood ratio or a linear-quadratic score

    S(y) = c1*y + c2*y**2 - c3,    y = (x - mu_inf) / sigma_inf

CUSUM keeps ``W = max(0, W + S)``. Shiryaev-Roberts keeps ``R = (1 + R) * exp(S)``
and is stored as ``log R`` because R grows geometrically after a change.

Change-hypothesis indexing: a change at ``k`` means ``x[k+1]`` is the first
post-change sample, ``k = 0 .. n-1``. With that convention the brute-force
statistics below coincide with the recursions from ``n = 1`` on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np

from .baseline import BaselineModel, standardize
from .errors import ConfigError, DataError, DesignError, DomainError

Kind = Literal["cusum", "sr"]
KINDS = ("cusum", "sr")


# --------------------------------------------------------------------- scores


@dataclass(frozen=True, slots=True)
class ScoreParams:
    c1: float
    c2: float
    c3: float

    def __post_init__(self) -> None:
        vals = (self.c1, self.c2, self.c3)
        if not all(math.isfinite(v) for v in vals):
            raise DesignError(f"score coefficients must be finite, got {vals}")
        if min(vals) < 0:
            raise DesignError(f"score coefficients must be non-negative, got {vals}")
        if self.c1 + self.c2 <= 0:
            raise DesignError("c1 + c2 must be > 0; the score would ignore the data")


def coeffs_from_gaussian(q0: float, delta0: float) -> ScoreParams:
    """Coefficients that make the score the exact Gaussian LLR.

    ``q0 = sigma_inf / sigma`` and ``delta0 = (mu - mu_inf) / sigma_inf``. Only
    variance increases (``q0 <= 1``) are supported.
    """
    if not q0 > 0:
        raise DesignError(f"q0 must be > 0, got {q0}")
    if q0 > 1:
        raise DesignError(f"q0 = {q0} > 1 gives a negative quadratic coefficient")
    q2 = q0 * q0
    return ScoreParams(
        c1=delta0 * q2,
        c2=(1.0 - q2) / 2.0,
        c3=delta0 * delta0 * q2 / 2.0 - math.log(q0),
    )


def lq_score(y, p: ScoreParams):
    return p.c1 * y + p.c2 * y * y - p.c3


@dataclass(frozen=True, slots=True)
class GaussianChangeSpec:
    """Pre-change ``N(mu_inf, sigma_inf**2)`` versus post-change ``N(mu, sigma**2)``."""

    mu_inf: float
    sigma_inf: float
    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not (self.sigma_inf > 0 and self.sigma > 0):
            raise ConfigError("Gaussian standard deviations must be > 0")

    @property
    def q(self) -> float:
        return self.sigma_inf / self.sigma

    @property
    def delta(self) -> float:
        return (self.mu - self.mu_inf) / self.sigma_inf


def gaussian_llr(x, spec: GaussianChangeSpec):
    """``log g(x)/f(x)`` for the two Gaussians of ``spec``, in closed form."""
    z_post = (x - spec.mu) / spec.sigma
    z_pre = (x - spec.mu_inf) / spec.sigma_inf
    return math.log(spec.sigma_inf / spec.sigma) + 0.5 * (z_pre * z_pre - z_post * z_post)


@dataclass(frozen=True)
class LinearQuadraticScore:
    """Score on standardized observations.

    With ``baseline=None`` the observations are assumed to be standardized
    already (and a ``(1, 0, 0)`` score passes them through unchanged).
    """

    params: ScoreParams
    baseline: BaselineModel | None = None

    def __call__(self, x):
        y = x if self.baseline is None else standardize(x, self.baseline)
        return lq_score(y, self.params)


@dataclass(frozen=True)
class GaussianLLRScore:
    spec: GaussianChangeSpec

    def __call__(self, x):
        return gaussian_llr(x, self.spec)


ScoreFn = Callable[[object], object]


# ------------------------------------------------------------ state machines


def _log1p_exp(v):
    # log(1 + e^v), with log(1 + e^-inf) = 0; shared by the scalar and batch paths
    return np.logaddexp(0.0, v)


def check_threshold(kind: str, threshold: float) -> None:
    if kind not in KINDS:
        raise ConfigError(f"detector kind must be one of {KINDS}, got {kind!r}")
    if not math.isfinite(threshold):
        raise ConfigError(f"threshold must be finite, got {threshold}")
    if kind == "sr" and threshold <= 0:
        raise ConfigError(f"SR threshold A must be > 0, got {threshold}")
    if kind == "cusum" and threshold < 0:
        raise ConfigError(f"CUSUM threshold h must be >= 0, got {threshold}")


def initial_value(kind: str) -> float:
    return 0.0 if kind == "cusum" else -math.inf


def compare_level(kind: str, threshold: float) -> float:
    """The threshold in the domain the statistic is stored in."""
    return threshold if kind == "cusum" else math.log(threshold)


@dataclass(frozen=True, slots=True)
class DetectorState:
    """Running statistic.

    ``value`` is ``W`` for CUSUM and ``log R`` for SR. ``n`` is the global
    sample clock and keeps running across resets; ``cycle_n`` restarts.
    """

    kind: Kind
    threshold: float
    value: float = field(default=math.nan)
    n: int = 0
    cycle_n: int = 0

    def __post_init__(self) -> None:
        check_threshold(self.kind, self.threshold)
        if math.isnan(self.value):
            object.__setattr__(self, "value", initial_value(self.kind))

    @property
    def statistic(self) -> float:
        """The statistic on its natural scale (``R``, not ``log R``, for SR)."""
        return self.value if self.kind == "cusum" else math.exp(self.value)


def _checked(increment: float) -> float:
    increment = float(increment)
    if not math.isfinite(increment):
        raise DataError(f"non-finite increment {increment}")
    return increment


def cusum_step(s: DetectorState, increment: float) -> DetectorState:
    if s.kind != "cusum":
        raise ConfigError("cusum_step on a non-CUSUM state")
    value = max(0.0, s.value + _checked(increment))
    return replace(s, value=value, n=s.n + 1, cycle_n=s.cycle_n + 1)


def sr_step(s: DetectorState, increment: float) -> DetectorState:
    if s.kind != "sr":
        raise ConfigError("sr_step on a non-SR state")
    value = _checked(increment) + float(_log1p_exp(s.value))
    return replace(s, value=value, n=s.n + 1, cycle_n=s.cycle_n + 1)


def step(s: DetectorState, increment: float) -> DetectorState:
    return cusum_step(s, increment) if s.kind == "cusum" else sr_step(s, increment)


def check_alarm(s: DetectorState) -> bool:
    """Inclusive crossing: statistic >= threshold."""
    if s.cycle_n < 1:
        return False
    return s.value >= compare_level(s.kind, s.threshold)


def reset(s: DetectorState) -> DetectorState:
    return replace(s, value=initial_value(s.kind), cycle_n=0)


# -------------------------------------------------------------------- oracles


def _log_lrs(lrs: Sequence[float]) -> np.ndarray:
    arr = np.asarray(lrs, dtype=float)
    if arr.size == 0:
        raise DomainError("empty likelihood-ratio sequence")
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise DomainError("likelihood ratios must be finite and > 0")
    return np.log(arr)


def cusum_bruteforce(lrs: Sequence[float]) -> float:
    """``max(0, max_k sum_{j=k+1..n} log LR_j)`` over every change hypothesis k."""
    logs = _log_lrs(lrs)
    n = logs.size
    best = -math.inf
    for k in range(n):
        total = 0.0
        for j in range(k, n):
            total += logs[j]
        best = max(best, total)
    return max(0.0, best)


def sr_bruteforce(lrs: Sequence[float]) -> float:
    """``sum_k prod_{j=k+1..n} LR_j`` over every change hypothesis k."""
    arr = np.asarray(lrs, dtype=float)
    _log_lrs(arr)
    n = arr.size
    total = 0.0
    for k in range(n):
        prod = 1.0
        for j in range(k, n):
            prod *= arr[j]
        total += prod
    return total


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class DetectorConfig:
    """A detector kind, its threshold and the increment function it consumes."""

    kind: Kind
    threshold: float
    score: ScoreFn

    def __post_init__(self) -> None:
        check_threshold(self.kind, self.threshold)

    def with_threshold(self, threshold: float) -> "DetectorConfig":
        return replace(self, threshold=threshold)

    def new_state(self) -> DetectorState:
        return DetectorState(self.kind, self.threshold)

    def to_dict(self) -> dict:
        score = self.score
        if isinstance(score, GaussianLLRScore):
            sd = {"gaussian_lr": {
                "mu_inf": score.spec.mu_inf, "sigma_inf": score.spec.sigma_inf,
                "mu": score.spec.mu, "sigma": score.spec.sigma,
            }}
        elif isinstance(score, LinearQuadraticScore):
            p = score.params
            sd = {"c1": p.c1, "c2": p.c2, "c3": p.c3}
        else:
            raise ConfigError(f"cannot serialize score {score!r}")
        return {"kind": self.kind, "threshold": self.threshold, "score": sd}

    @classmethod
    def from_dict(cls, d: dict, baseline: BaselineModel | None = None) -> "DetectorConfig":
        try:
            kind, threshold, sd = d["kind"], float(d["threshold"]), d["score"]
        except KeyError as exc:
            raise ConfigError(f"detector config missing field {exc}") from None
        return cls(kind, threshold, score_from_dict(sd, baseline))


def score_from_dict(sd: dict, baseline: BaselineModel | None = None) -> ScoreFn:
    """Build a score from ``{c1,c2,c3}``, ``{q0,delta0}`` or ``{gaussian_lr: {...}}``."""
    if "gaussian_lr" in sd:
        g = sd["gaussian_lr"]
        try:
            spec = GaussianChangeSpec(float(g["mu_inf"]), float(g["sigma_inf"]),
                                      float(g["mu"]), float(g["sigma"]))
        except KeyError as exc:
            raise ConfigError(f"gaussian_lr spec missing field {exc}") from None
        return GaussianLLRScore(spec)
    if {"q0", "delta0"} <= sd.keys():
        params = coeffs_from_gaussian(float(sd["q0"]), float(sd["delta0"]))
    elif {"c1", "c2", "c3"} <= sd.keys():
        params = ScoreParams(float(sd["c1"]), float(sd["c2"]), float(sd["c3"]))
    else:
        raise ConfigError(f"unrecognized score config {sorted(sd)}")
    return LinearQuadraticScore(params, baseline)
