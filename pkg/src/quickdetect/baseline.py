"""Pre-change (legitimate traffic) moments and standardization."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, DegenerateBaselineError, InsufficientDataError
from .ingest import BinnedCount

Window = Sequence[Union[BinnedCount, float, int]]


@dataclass(frozen=True, slots=True)
class BaselineModel:
    mu_inf: float
    sigma_inf: float
    n_samples: int
    window_start: int
    window_end: int

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mu_inf) and math.isfinite(self.sigma_inf)):
            raise ConfigError("baseline moments must be finite")
        if self.sigma_inf <= 0:
            raise ConfigError(f"sigma_inf must be > 0, got {self.sigma_inf}")
        if self.n_samples < 2:
            raise ConfigError(f"n_samples must be >= 2, got {self.n_samples}")
        if self.window_end - self.window_start + 1 != self.n_samples:
            raise ConfigError("baseline window inconsistent with n_samples")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineModel":
        try:
            return cls(
                mu_inf=float(d["mu_inf"]),
                sigma_inf=float(d["sigma_inf"]),
                n_samples=int(d["n_samples"]),
                window_start=int(d["window_start"]),
                window_end=int(d["window_end"]),
            )
        except KeyError as exc:
            raise ConfigError(f"baseline document missing field {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "BaselineModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _values_and_window(window: Window) -> tuple[np.ndarray, int, int]:
    if len(window) and isinstance(window[0], BinnedCount):
        values = np.array([b.count for b in window], dtype=float)
        return values, window[0].bin_index, window[-1].bin_index
    values = np.asarray(window, dtype=float)
    return values, 0, len(values) - 1


def estimate_baseline(window: Window) -> BaselineModel:
    """Sample mean and unbiased (n-1) standard deviation of a training window.

    ``window`` is a sequence of :class:`BinnedCount` (the recorded window is
    then taken from their bin indices) or of plain numbers (window ``0..n-1``).
    """
    values, start, end = _values_and_window(window)
    n = values.size
    if n < 2:
        raise InsufficientDataError(f"baseline window needs >= 2 samples, got {n}")
    mu = float(values.mean())
    var = float(values.var(ddof=1))
    if not var > 0:
        raise DegenerateBaselineError("baseline window has zero variance")
    return BaselineModel(mu, math.sqrt(var), n, start, end)


def refresh_baseline(b: BaselineModel, recent_window: Window) -> BaselineModel:
    # the previous model carries no weight; cadence is the caller's decision
    return estimate_baseline(recent_window)


def standardize(x, b: BaselineModel):
    """``(x - mu_inf) / sigma_inf``; works elementwise on arrays."""
    return (x - b.mu_inf) / b.sigma_inf
