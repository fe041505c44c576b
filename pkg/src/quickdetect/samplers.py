"""Random observation sources for Monte Carlo runs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError

GENERATOR_NAME = "numpy.random.PCG64 via SeedSequence"


@dataclass(frozen=True, eq=False)
class SamplerSpec:
    """iid Gaussian variates, or a bootstrap (with replacement) from a window."""

    kind: Literal["gaussian", "empirical"]
    mu: float = 0.0
    sigma: float = 1.0
    window: np.ndarray | None = field(default=None, repr=False)
    seed: int = 0
    source: str | None = None

    def __post_init__(self) -> None:
        if self.kind == "gaussian":
            if not (math.isfinite(self.mu) and math.isfinite(self.sigma) and self.sigma > 0):
                raise ConfigError(f"gaussian sampler needs finite mu and sigma > 0, got {self.mu}, {self.sigma}")
        elif self.kind == "empirical":
            if self.window is None or len(self.window) == 0:
                raise ConfigError("empirical sampler needs a non-empty window")
            window = np.asarray(self.window, dtype=float)
            if not np.isfinite(window).all():
                raise ConfigError("empirical window contains non-finite values")
            object.__setattr__(self, "window", window)
        else:
            raise ConfigError(f"unknown sampler kind {self.kind!r}")

    @classmethod
    def gaussian(cls, mu: float, sigma: float, seed: int = 0) -> "SamplerSpec":
        return cls("gaussian", mu=float(mu), sigma=float(sigma), seed=seed)

    @classmethod
    def empirical(cls, window: Sequence[float], seed: int = 0, source: str | None = None) -> "SamplerSpec":
        return cls("empirical", window=np.asarray(window, dtype=float), seed=seed, source=source)

    def generate(self, rng: np.random.Generator, n) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.normal(self.mu, self.sigma, size=n)
        return self.window[rng.integers(0, self.window.size, size=n)]

    def to_dict(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "mu": self.mu, "sigma": self.sigma, "seed": self.seed}
        return {"kind": "empirical", "window_size": int(self.window.size),
                "source": self.source, "seed": self.seed}


def draw(sampler: SamplerSpec, n: int) -> np.ndarray:
    """``n`` variates; a pure function of the sampler (including its seed)."""
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    return sampler.generate(np.random.default_rng(sampler.seed), n)


def inject_change(pre: SamplerSpec, post: SamplerSpec, nu: int, total: int) -> np.ndarray:
    """``nu`` pre-change samples followed by ``total - nu`` post-change samples.

    Each part uses its own sampler's seed.
    """
    if not 0 <= nu <= total:
        raise ConfigError(f"need 0 <= nu <= total, got nu={nu}, total={total}")
    parts = []
    if nu:
        parts.append(draw(pre, nu))
    if total - nu:
        parts.append(draw(post, total - nu))
    return np.concatenate(parts) if parts else np.empty(0)


def parse_sampler(text: str, seed: int = 0, base_dir: Path | None = None) -> SamplerSpec:
    """Parse ``gaussian:MU,SIGMA`` or ``empirical:PATH[:START:END]``.

    For the empirical form PATH is a counts CSV and START/END (inclusive bin
    indices) optionally restrict the window.
    """
    kind, _, rest = text.partition(":")
    if kind == "gaussian":
        try:
            mu, sigma = (float(v) for v in rest.split(","))
        except ValueError:
            raise ConfigError(f"expected gaussian:MU,SIGMA, got {text!r}") from None
        return SamplerSpec.gaussian(mu, sigma, seed)
    if kind == "empirical":
        from .ingest import parse_counts

        path, *bounds = rest.split(":")
        p = Path(path)
        if base_dir is not None and not p.is_absolute():
            p = base_dir / p
        if not p.is_file():
            raise ConfigError(f"empirical window file not found: {path}")
        with open(p) as fh:
            bins = parse_counts(fh)
        if bounds:
            if len(bounds) != 2:
                raise ConfigError(f"expected empirical:PATH:START:END, got {text!r}")
            lo, hi = int(bounds[0]), int(bounds[1])
            bins = [b for b in bins if lo <= b.bin_index <= hi]
        return SamplerSpec.empirical([b.count for b in bins], seed, source=str(path))
    raise ConfigError(f"unknown sampler {text!r}")
