"""Monte Carlo search for the threshold that gives a target ARL to false alarm.

Every candidate is evaluated with the same master seed, so the replication
streams are shared across candidates and the estimated ARL is a
non-decreasing step function of the threshold. The search variable is
``log A`` for SR and ``h`` (already a log-scale quantity) for CUSUM.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .detectors import DetectorConfig
from .errors import ConfigError
from .multicyclic import ArlEstimate, estimate_arl
from .samplers import GENERATOR_NAME, SamplerSpec, draw, inject_change  # noqa: F401

log = logging.getLogger(__name__)

MAX_ITERATIONS = 60


@dataclass
class CalibrationResult:
    kind: str
    threshold: float
    measured_arl: float
    measured_se: float
    iterations: int
    gamma: float
    rel_tol: float
    replications: int
    converged: bool
    seed: int
    generator: str = GENERATOR_NAME
    truncated: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["history"] = [list(h) for h in self.history]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        names = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in names}
        d["history"] = [tuple(h) for h in d.get("history", [])]
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "CalibrationResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _to_threshold(kind: str, u: float) -> float:
    return math.exp(u) if kind == "sr" else u


def calibrate_threshold(config: DetectorConfig, gamma: float, sampler: SamplerSpec,
                        rel_tol: float = 0.05, replications: int = 10_000,
                        seed: int | None = None, cap: int | None = None,
                        workers: int = 1) -> CalibrationResult:
    """Find a threshold whose measured ARL is within ``rel_tol * gamma`` of ``gamma``.

    ``config.threshold`` is ignored. The starting bracket is ``[1, gamma]`` on
    A for SR and ``[0, log gamma]`` on h for CUSUM; it is widened until it
    contains the target, then bisected. A result with ``converged=False`` is
    returned (not raised) when the iteration budget runs out.
    """
    if not gamma > 1:
        raise ConfigError(f"gamma must be > 1, got {gamma}")
    if not 0 < rel_tol < 0.5:
        raise ConfigError(f"rel_tol must be in (0, 0.5), got {rel_tol}")
    if replications < 100:
        raise ConfigError(f"replications must be >= 100, got {replications}")
    kind = config.kind
    seed = sampler.seed if seed is None else seed
    cap = int(100 * gamma) if cap is None else cap
    history: list[tuple[float, float]] = []
    evaluations = 0

    def evaluate(u: float) -> ArlEstimate:
        nonlocal evaluations
        evaluations += 1
        est = estimate_arl(config.with_threshold(_to_threshold(kind, u)), sampler,
                           replications, cap=cap, seed=seed, workers=workers)
        history.append((_to_threshold(kind, u), est.arl))
        log.debug("threshold %.6g -> ARL %.6g", _to_threshold(kind, u), est.arl)
        return est

    def done(u: float, est: ArlEstimate, converged: bool) -> CalibrationResult:
        return CalibrationResult(kind, _to_threshold(kind, u), est.arl, est.standard_error,
                                 evaluations, gamma, rel_tol, replications, converged, seed,
                                 truncated=est.truncated, history=history)

    def within(est: ArlEstimate) -> bool:
        return abs(est.arl - gamma) <= rel_tol * gamma

    # A = 1 for SR, h = 0 for CUSUM; both upper ends equal log(gamma)
    lo, hi = 0.0, math.log(gamma)
    est_lo: ArlEstimate | None = None

    est_hi = evaluate(hi)
    while est_hi.arl < gamma and not within(est_hi):
        if evaluations >= MAX_ITERATIONS:
            return done(hi, est_hi, False)
        lo, est_lo = hi, est_hi
        hi = hi + 1.0 if kind == "sr" else 2.0 * hi
        est_hi = evaluate(hi)
    if within(est_hi):
        return done(hi, est_hi, True)

    if est_lo is None:
        est_lo = evaluate(lo)
    while est_lo.arl > gamma and not within(est_lo):
        if kind != "sr" or evaluations >= MAX_ITERATIONS:
            # h = 0 alarms at the first sample, so CUSUM never gets here for gamma > 1
            return done(lo, est_lo, False)
        hi, est_hi = lo, est_lo
        lo -= math.log(gamma)
        est_lo = evaluate(lo)
    if within(est_lo):
        return done(lo, est_lo, True)

    best_u, best = hi, est_hi
    while evaluations < MAX_ITERATIONS:
        mid = 0.5 * (lo + hi)
        est = evaluate(mid)
        if abs(est.arl - gamma) < abs(best.arl - gamma):
            best_u, best = mid, est
        if within(est):
            return done(mid, est, True)
        if est.arl < gamma:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(hi)):
            break
    return done(best_u, best, False)
