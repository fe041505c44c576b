"""Repeated (reset-after-alarm) detection and its operating characteristics.

``run_multicyclic`` drives the scalar state machine over a recorded series.
The Monte Carlo estimators use a batched engine instead: every replication
has its own seeded generator and its observations are drawn in fixed-size
time chunks, so the sample at a given (replication, time) is the same no
matter which threshold is being evaluated. That common-random-number
coupling makes estimated run lengths monotone in the threshold.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .detectors import (
    DetectorConfig,
    _log1p_exp,
    check_alarm,
    compare_level,
    initial_value,
    reset,
    step,
)
from .errors import ConfigError, DataError, InsufficientDataError, NotDetectedError, ParseError
from .reporting import dumps, fmt_float
from .samplers import SamplerSpec

CHUNK = 256
DEFAULT_SADD_GRID = (0, 1, 2, 5, 10, 25, 50)


@dataclass(frozen=True, slots=True)
class AlarmRecord:
    j: int
    alarm_time: int
    cycle_length: int
    statistic: float


@dataclass
class AlarmLog:
    """Alarm point process of one multi-cyclic run.

    ``statistic`` values (in records and trajectory) are ``W`` for CUSUM and
    ``log R`` for SR.
    """

    records: list[AlarmRecord] = field(default_factory=list)
    samples_processed: int = 0
    trajectory: list[float] | None = None

    @property
    def alarm_times(self) -> list[int]:
        return [r.alarm_time for r in self.records]

    def validate(self) -> None:
        prev = 0
        for j, rec in enumerate(self.records, start=1):
            if rec.j != j or rec.cycle_length < 1 or rec.alarm_time - prev != rec.cycle_length:
                raise DataError(f"inconsistent alarm record {rec}")
            prev = rec.alarm_time
        if self.samples_processed < prev:
            raise DataError("samples_processed precedes the last alarm")

    @classmethod
    def from_alarm_times(cls, times: Sequence[int], samples_processed: int | None = None) -> "AlarmLog":
        records, prev = [], 0
        for j, t in enumerate(times, start=1):
            records.append(AlarmRecord(j, int(t), int(t) - prev, math.nan))
            prev = int(t)
        log = cls(records, prev if samples_processed is None else samples_processed)
        log.validate()
        return log


@dataclass(frozen=True, slots=True)
class ChangeSpec:
    """Changepoint ``nu``: ``x[nu+1]`` is the first post-change sample; None means no change."""

    nu: int | None

    def __post_init__(self) -> None:
        if self.nu is not None and self.nu < 0:
            raise ConfigError(f"nu must be >= 0, got {self.nu}")


def _scores(config: DetectorConfig, observations) -> np.ndarray:
    x = np.asarray(observations, dtype=float)
    if not np.isfinite(x).all():
        raise DataError("non-finite observation")
    s = np.asarray(config.score(x), dtype=float)
    if not np.isfinite(s).all():
        bad = int(np.flatnonzero(~np.isfinite(s))[0])
        raise DataError(f"non-finite score at sample {bad + 1}")
    return s


def run_multicyclic(observations: Iterable[float], config: DetectorConfig,
                    emit_trajectory: bool = False) -> AlarmLog:
    """Score, step and check every sample, resetting the detector after each alarm."""
    scores = _scores(config, list(observations))
    state = config.new_state()
    log = AlarmLog(trajectory=[] if emit_trajectory else None)
    last = 0
    for s in scores:
        state = step(state, s)
        if emit_trajectory:
            log.trajectory.append(state.value)
        if check_alarm(state):
            log.records.append(AlarmRecord(len(log.records) + 1, state.n, state.n - last, state.value))
            last = state.n
            state = reset(state)
    log.samples_processed = state.n
    return log


def detection_delay(log: AlarmLog, change: ChangeSpec | int) -> tuple[int, int]:
    """``(alarm_time - nu, false_alarms)`` for the first alarm after ``nu``."""
    nu = change.nu if isinstance(change, ChangeSpec) else change
    if nu is None:
        raise NotDetectedError("no changepoint; nothing to detect")
    for i, t in enumerate(log.alarm_times):
        if t > nu:
            return t - nu, i
    raise NotDetectedError(f"no alarm after nu={nu}")


# -------------------------------------------------------------- batch engine


def _simulate(config: DetectorConfig, pre: SamplerSpec, post: SamplerSpec, nu: int,
              budget: int, seeds: Sequence[np.random.SeedSequence],
              chunk: int = CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """Multi-cyclic runs: first alarm time after ``nu`` (0 if none within
    ``budget`` samples) and the number of alarms at or before ``nu``."""
    kind = config.kind
    level = compare_level(kind, config.threshold)
    init = initial_value(kind)
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in seeds]
    m = len(rngs)
    detected = np.zeros(m, dtype=np.int64)
    false_alarms = np.zeros(m, dtype=np.int64)
    state = np.full(m, init)
    active = np.arange(m)
    t0 = 0
    while active.size and t0 < budget:
        width = min(chunk, budget - t0)
        n_pre = min(max(nu - t0, 0), width)
        x = np.empty((active.size, width))
        for row, r in enumerate(active):
            if n_pre:
                x[row, :n_pre] = pre.generate(rngs[r], n_pre)
            if n_pre < width:
                x[row, n_pre:] = post.generate(rngs[r], width - n_pre)
        s = np.ascontiguousarray(np.asarray(config.score(x), dtype=float).T)
        if not np.isfinite(s).all():
            raise DataError("non-finite score in simulated stream")

        st = state[active]
        fa = false_alarms[active]
        det = np.zeros(active.size, dtype=np.int64)
        for i in range(width):
            if kind == "cusum":
                st = np.maximum(st + s[i], 0.0)
            else:
                st = s[i] + _log1p_exp(st)
            hit = st >= level
            if hit.any():
                t = t0 + i + 1
                if t > nu:
                    det[hit & (det == 0)] = t
                    if det.all():
                        break
                else:
                    fa += hit
                st = np.where(hit, init, st)
        state[active] = st
        false_alarms[active] = fa
        detected[active] = det
        active = active[det == 0]
        t0 += width
    return detected, false_alarms


def _simulate_job(args):
    return _simulate(*args)


def _run_replications(config, pre, post, nu, budget, replications, seed, workers=1):
    if replications < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    seeds = np.random.SeedSequence(seed).spawn(replications)
    if workers <= 1:
        return _simulate(config, pre, post, nu, budget, seeds)
    parts = np.array_split(np.arange(replications), workers)
    jobs = [(config, pre, post, nu, budget, [seeds[i] for i in p]) for p in parts if p.size]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(_simulate_job, jobs))
    # fixed reduction order keeps the result independent of scheduling
    return (np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results]))


def default_cap(config: DetectorConfig) -> int:
    """100x the run length the threshold alone suggests (A for SR, e^h for CUSUM).

    Score-driven detectors can run far longer than that scale, hence the floor.
    """
    scale = config.threshold if config.kind == "sr" else math.exp(min(config.threshold, 30.0))
    return int(min(max(100.0 * scale, 10_000.0), 1e7))


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return mean, se


@dataclass(frozen=True)
class ArlEstimate:
    """Mean first-alarm time under no change.

    When ``truncated > 0`` runs were censored at ``cap`` and ``arl`` is a lower bound.
    """

    arl: float
    standard_error: float
    replications: int
    truncated: int
    cap: int

    @property
    def is_lower_bound(self) -> bool:
        return self.truncated > 0


def estimate_arl(config: DetectorConfig, sampler: SamplerSpec, replications: int,
                 cap: int | None = None, seed: int | None = None, workers: int = 1) -> ArlEstimate:
    cap = default_cap(config) if cap is None else int(cap)
    if cap < 1:
        raise ConfigError(f"cap must be >= 1, got {cap}")
    seed = sampler.seed if seed is None else seed
    detected, _ = _run_replications(config, sampler, sampler, 0, cap, replications, seed, workers)
    truncated = int((detected == 0).sum())
    times = np.where(detected == 0, cap, detected).astype(float)
    arl, se = _mean_se(times)
    return ArlEstimate(arl, se, replications, truncated, cap)


@dataclass(frozen=True)
class StaddEstimate:
    stadd: float
    standard_error: float
    nu: int
    replications: int
    discarded: int
    delays: np.ndarray = field(repr=False)
    false_alarms: np.ndarray = field(repr=False)

    @property
    def discard_fraction(self) -> float:
        return self.discarded / self.replications


def estimate_stadd(config: DetectorConfig, pre: SamplerSpec, post: SamplerSpec, nu: int,
                   replications: int, seed: int | None = None, budget: int | None = None,
                   workers: int = 1) -> StaddEstimate:
    """Mean of ``alarm_time[I_nu] - nu`` over multi-cyclic runs changing at ``nu``.

    ``delays`` keeps one entry per replication (0 where nothing was detected
    within ``budget`` samples, those are excluded from the mean).
    """
    if nu < 0:
        raise ConfigError(f"nu must be >= 0, got {nu}")
    budget = nu + default_cap(config) if budget is None else int(budget)
    seed = pre.seed if seed is None else seed
    detected, fa = _run_replications(config, pre, post, nu, budget, replications, seed, workers)
    ok = detected > 0
    if not ok.any():
        raise InsufficientDataError("no replication detected the change within budget")
    delays = np.where(ok, detected - nu, 0)
    stadd, se = _mean_se(delays[ok].astype(float))
    return StaddEstimate(stadd, se, nu, replications, int((~ok).sum()), delays, fa)


def stadd_convergence(config: DetectorConfig, pre: SamplerSpec, post: SamplerSpec, nu: int,
                      replications: int, seed: int | None = None,
                      workers: int = 1) -> tuple[StaddEstimate, StaddEstimate]:
    """STADD at ``nu`` and at ``2*nu``; close values indicate the stationary regime."""
    return (estimate_stadd(config, pre, post, nu, replications, seed, workers=workers),
            estimate_stadd(config, pre, post, 2 * nu, replications, seed, workers=workers))


def conditional_delays(config: DetectorConfig, pre: SamplerSpec, post: SamplerSpec,
                       k_grid: Sequence[int] = DEFAULT_SADD_GRID, replications: int = 1000,
                       seed: int | None = None, budget: int | None = None,
                       workers: int = 1) -> dict[int, tuple[float, float, int]]:
    """``E_k[T - k | T > k]`` per grid point as ``(mean, se, runs kept)``.

    T is the single-cycle stopping time; runs that alarm at or before k are
    discarded.
    """
    if not len(k_grid):
        raise ConfigError("k_grid must be non-empty")
    seed = pre.seed if seed is None else seed
    out = {}
    for k in k_grid:
        cap = k + default_cap(config) if budget is None else int(budget)
        detected, fa = _run_replications(config, pre, post, int(k), cap, replications, seed, workers)
        kept = (fa == 0) & (detected > 0)
        if not kept.any():
            raise InsufficientDataError(f"every run was discarded at k={k}")
        mean, se = _mean_se((detected[kept] - k).astype(float))
        out[int(k)] = (mean, se, int(kept.sum()))
    return out


def estimate_sadd(config: DetectorConfig, pre: SamplerSpec, post: SamplerSpec,
                  k_grid: Sequence[int] = DEFAULT_SADD_GRID, replications: int = 1000,
                  seed: int | None = None, workers: int = 1) -> float:
    """Maximum conditional delay over ``k_grid``; a lower bound on the supremum over all k."""
    per_k = conditional_delays(config, pre, post, k_grid, replications, seed, workers=workers)
    return max(v[0] for v in per_k.values())


# ------------------------------------------------------------------ outputs


def alarm_log_ndjson(log: AlarmLog, extra: dict | None = None) -> str:
    lines = []
    for rec in log.records:
        obj = {"j": rec.j, "T_global": rec.alarm_time, "cycle_len": rec.cycle_length,
               "stat": rec.statistic}
        if extra:
            obj.update(extra)
        lines.append(dumps(obj))
    return "".join(line + "\n" for line in lines)


def parse_alarm_ndjson(text: str) -> AlarmLog:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(AlarmRecord(int(obj["j"]), int(obj["T_global"]),
                                       int(obj["cycle_len"]),
                                       math.nan if obj.get("stat") is None else float(obj["stat"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad alarm record: {exc}", lineno) from None
    log = AlarmLog(records, records[-1].alarm_time if records else 0)
    log.validate()
    return log


def trajectory_csv(log: AlarmLog, comment: str | None = None) -> str:
    if log.trajectory is None:
        raise ConfigError("run was made without a trajectory")
    lines = [f"# {c}" for c in comment.splitlines()] if comment else []
    lines.append("n,statistic")
    lines.extend(f"{n},{fmt_float(v)}" for n, v in enumerate(log.trajectory, start=1))
    return "\n".join(lines) + "\n"


def metrics_report(log: AlarmLog, nu: int | None = None) -> dict:
    """Summary of one recorded run.

    Without a changepoint every alarm counts as false and ``arl`` is the mean
    cycle length. With ``nu`` the delay of the first alarm after ``nu`` is
    reported and ``arl`` uses the cycles completed before the change.
    """
    cycles = np.array([r.cycle_length for r in log.records], dtype=float)
    out = {"arl": None, "arl_se": None, "stadd": None, "stadd_se": None, "sadd": None,
           "false_alarm_rate_per_1000": None, "delays": [], "false_alarms": None,
           "n_alarms": len(log.records), "samples_processed": log.samples_processed}
    if nu is None:
        pre_cycles = cycles
        if log.samples_processed:
            out["false_alarm_rate_per_1000"] = 1000.0 * len(cycles) / log.samples_processed
        out["false_alarms"] = len(cycles)
    else:
        try:
            delay, false_alarms = detection_delay(log, nu)
        except NotDetectedError:
            delay, false_alarms = None, sum(1 for t in log.alarm_times if t <= nu)
        pre_cycles = cycles[:false_alarms]
        out["false_alarms"] = false_alarms
        if nu > 0:
            out["false_alarm_rate_per_1000"] = 1000.0 * false_alarms / nu
        if delay is not None:
            out["delays"] = [delay]
            out["stadd"] = float(delay)
    if pre_cycles.size:
        out["arl"], se = _mean_se(pre_cycles)
        out["arl_se"] = se if pre_cycles.size > 1 else None
    return out
