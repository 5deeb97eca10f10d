"""Point estimates with confidence intervals and resampling helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Z95 = 1.959963984540054


@dataclass(frozen=True)
class EstimateWithCI:
    point: float
    ci_low: float
    ci_high: float
    n_samples: int
    method: str

    def __post_init__(self):
        if not (self.ci_low <= self.point <= self.ci_high) and not math.isnan(self.point):
            raise ValueError(f"interval [{self.ci_low}, {self.ci_high}] does not cover {self.point}")

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high

    def overlaps(self, other: "EstimateWithCI") -> bool:
        return self.ci_low <= other.ci_high and other.ci_low <= self.ci_high

    @property
    def half_width(self) -> float:
        return 0.5 * (self.ci_high - self.ci_low)


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """numpy generator keyed by a seed and integer tags (used for resampling only)."""
    return np.random.default_rng([int(seed) & ((1 << 64) - 1), *[int(t) for t in tags]])


def mean_ci(x, method: str = "normal-mean") -> EstimateWithCI:
    x = np.asarray(x, dtype=float)
    m = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return EstimateWithCI(m, m - Z95 * se, m + Z95 * se, len(x), method)


def proportion_ci(hits: int, n: int, method: str = "wilson") -> EstimateWithCI:
    """Wilson score interval for a binomial proportion."""
    p = hits / n
    z2 = Z95 ** 2
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    # clip rounding at the ends; the exact bounds lie in [0, 1]
    return EstimateWithCI(p, max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half)), n, method)


def ratio_bootstrap(num, den, n_boot: int = 2000, seed: int = 0,
                    method: str = "ratio-bootstrap") -> EstimateWithCI:
    """``sum(num) / sum(den)`` with a percentile interval from resampling index pairs."""
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    point = float(num.sum() / den.sum())
    rng = rng_for(seed, 0xB007)
    idx = rng.integers(0, len(num), size=(n_boot, len(num)))
    boots = num[idx].sum(axis=1) / den[idx].sum(axis=1)
    lo, hi = np.quantile(boots, [0.025, 0.975])
    return EstimateWithCI(point, min(point, float(lo)), max(point, float(hi)), len(num), method)


def lag1_autocorrelation(x) -> float:
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    den = float(x @ x)
    return float(x[:-1] @ x[1:] / den) if den > 0 else 0.0


def permutation_pvalue(x, n_perm: int = 999, seed: int = 0) -> tuple[float, float]:
    """(|lag-1 autocorrelation|, permutation p-value) for the null of exchangeability."""
    x = np.asarray(x, dtype=float)
    obs = abs(lag1_autocorrelation(x))
    rng = rng_for(seed, 0x9E7)
    count = 0
    for _ in range(n_perm):
        if abs(lag1_autocorrelation(rng.permutation(x))) >= obs:
            count += 1
    return obs, (count + 1) / (n_perm + 1)
