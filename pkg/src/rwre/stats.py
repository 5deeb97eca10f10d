"""Estimators that compare simulations with the limit theorems.

All estimators are deterministic given their seeds; resampling uses numpy
generators keyed by the master seed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from rwre import exact1d
from rwre._hashing import as_seed, walker_seeds
from rwre._kernels import annealed_endpoints1d, annealed_two_times1d, walk1d
from rwre.env import Environment, EnvironmentSpec, SpecError, _cum
from rwre.estimate import (Z95, EstimateWithCI, mean_ci, proportion_ci, rng_for)
from rwre.regen import RegenerationDecomposition, regeneration_times
from rwre.walk import Trajectory, annealed_passage_times, quenched_endpoints

__all__ = [
    "EstimateWithCI", "ExponentFit", "HillEstimate", "ChiSquareReport", "velocity", "tail_index",
    "hill", "slowdown_probabilities", "slowdown_exponent_annealed", "slowdown_quenched_diagnostic",
    "aging_formula", "aging_correlator", "sinai_localization", "stable_scaling",
    "distribution_equality_test", "tprime_moment_diagnostic",
]


@dataclass(frozen=True)
class ExponentFit:
    n: np.ndarray
    statistic: np.ndarray
    slope: float
    intercept: float
    residual_norm: float
    slope_se: float
    dropped: tuple = ()

    def __post_init__(self):
        if len(self.n) < 4:
            raise ValueError("an exponent fit needs at least 4 grid points")
        if not math.isfinite(self.slope):
            raise ValueError("fitted slope is not finite")

    @classmethod
    def from_points(cls, n, y, dropped=()):
        x = np.log(np.asarray(n, dtype=float))
        y = np.asarray(y, dtype=float)
        res = sps.linregress(x, y)
        resid = y - (res.intercept + res.slope * x)
        return cls(np.asarray(n), y, float(res.slope), float(res.intercept),
                   float(np.linalg.norm(resid)), float(res.stderr), tuple(dropped))


def _spec_speed(spec: EnvironmentSpec) -> float:
    if spec.kind in ("constant", "finite_support"):
        return exact1d.speed(spec)
    return exact1d.speed_ergodic(spec)


# -- velocity -----------------------------------------------------------------------

def velocity(trajectories, N: int | None = None, direction=None, n_boot: int = 2000,
             seed: int = 0) -> EstimateWithCI:
    """Mean of ``X_N . l / N`` over walkers with a bootstrap percentile interval.

    Takes a list of :class:`Trajectory` or an array of endpoints with ``N``.
    """
    if len(trajectories) and isinstance(trajectories[0], Trajectory):
        N = trajectories[0].n_steps
        v = np.array([t.projection(direction)[-1] for t in trajectories], dtype=float) / N
    else:
        if N is None:
            raise ValueError("N is required with raw endpoints")
        e = np.asarray(trajectories, dtype=float)
        v = (e if e.ndim == 1 else e @ np.atleast_1d(direction if direction is not None else np.eye(e.shape[1])[0])) / N
    if len(v) < 30:
        raise ValueError("velocity needs at least 30 walkers")
    rng = rng_for(seed, 0x7E1)
    boots = v[rng.integers(0, len(v), size=(n_boot, len(v)))].mean(axis=1)
    lo, hi = np.quantile(boots, [0.025, 0.975])
    m = float(v.mean())
    return EstimateWithCI(m, min(m, float(lo)), max(m, float(hi)), len(v), "bootstrap-mean")


# -- tail index ---------------------------------------------------------------------

@dataclass(frozen=True)
class HillEstimate:
    estimate: EstimateWithCI
    k: int
    sweep: dict = field(default_factory=dict)   # k_fraction -> alpha
    light_tail_warning: bool = False
    n_censored: int = 0


def hill(x, k: int) -> float:
    """Hill estimator of the tail index from the top ``k`` order statistics."""
    xs = np.sort(np.asarray(x, dtype=float))[::-1]
    if not 1 <= k < len(xs):
        raise ValueError("k must lie in [1, n)")
    logs = np.log(xs[:k]) - math.log(xs[k])
    return float(k / logs.sum())


def tail_index(samples, k_fraction: float = 0.05, sweep=(0.02, 0.05, 0.10),
               cap: float | None = None) -> HillEstimate:
    """Hill estimate of the tail index ``s`` of positive samples.

    Negative entries mark censored samples; they enter the order statistics at
    ``cap`` (a lower bound on their true value). The interval uses asymptotic
    normality, ``alpha * (1 +- 1.96 / sqrt(k))``. The sweep over ``k`` flags
    light tails: estimates that keep climbing as ``k`` shrinks.
    """
    x = np.asarray(samples, dtype=float)
    cens = x < 0
    if (~cens).sum() < 1000:
        raise ValueError("tail_index needs at least 1000 uncensored samples")
    if cens.any():
        if cap is None:
            raise ValueError("censored samples need the censoring cap")
        x = np.where(cens, cap, x)
    if (x <= 0).any():
        raise ValueError("samples must be positive")
    k = max(1, int(round(k_fraction * len(x))))
    a = hill(x, k)
    half = Z95 * a / math.sqrt(k)
    sw = {f: hill(x, max(1, int(round(f * len(x))))) for f in sorted(sweep)}
    vals = [sw[f] for f in sorted(sw)]            # increasing k
    climbing = all(vals[i] > vals[i + 1] for i in range(len(vals) - 1))
    light = climbing and vals[0] > 1.2 * vals[-1]
    return HillEstimate(EstimateWithCI(a, a - half, a + half, k, "hill"), k, sw, light, int(cens.sum()))


def annealed_tau_sample(spec: EnvironmentSpec, n_walkers: int, master_seed: int,
                        max_steps: int = 10**8) -> np.ndarray:
    return annealed_passage_times(spec, n_walkers, master_seed, 1, max_steps)


# -- slowdowns ----------------------------------------------------------------------

def _check_slowdown(spec: EnvironmentSpec, w: float):
    v = _spec_speed(spec)
    if not v > 0:
        raise SpecError("slowdown estimates need a positive-speed law")
    if not w < v:
        raise ValueError(f"w = {w} must be below the speed {v}")
    return v


def slowdown_probabilities(spec: EnvironmentSpec, w: float, delta: float, n_grid, samples: int,
                           master_seed: int, batch: int = 50_000) -> np.ndarray:
    """Annealed ``P(X_n / n in (w - delta, w + delta))`` for each ``n`` in the grid."""
    _check_slowdown(spec, w)
    vals = np.asarray(spec.values, dtype=float)
    cum = _cum((1.0,) if spec.kind == "constant" else spec.probs)
    out = []
    for gi, n in enumerate(n_grid):
        master = as_seed(exact1d_seed(master_seed, gi))
        hits = 0
        for first in range(0, samples, batch):
            m = min(batch, samples - first)
            ends = np.empty(m, dtype=np.int64)
            annealed_endpoints1d(vals, cum, master, int(n), first, ends)
            hits += int(np.count_nonzero(np.abs(ends / n - w) < delta))
        out.append(hits / samples)
    return np.array(out)


def exact1d_seed(master: int, index: int) -> int:
    # independent master per grid point
    return walker_seeds(master, 10_000_000 + index)[0]


def _fit_dropping_zeros(n_grid, p, transform):
    n_grid = np.asarray(n_grid)
    keep = p > 0
    dropped = tuple(int(n) for n in n_grid[~keep])
    if dropped:
        warnings.warn(f"grid points {dropped} had no hits and were dropped", RuntimeWarning)
    if keep.sum() < 4:
        raise ValueError("fewer than 4 grid points with hits; increase samples")
    return ExponentFit.from_points(n_grid[keep], transform(p[keep]), dropped)


def slowdown_exponent_annealed(spec: EnvironmentSpec, w: float, delta: float, n_grid, samples: int,
                               master_seed: int = 0) -> ExponentFit:
    """Slope of ``log p_n`` against ``log n``; compares with ``1 - s``."""
    p = slowdown_probabilities(spec, w, delta, n_grid, samples, master_seed)
    return _fit_dropping_zeros(n_grid, p, np.log)


def quenched_slowdown_probabilities(env: Environment, w: float, delta: float, n_grid, samples: int,
                                    master_seed: int = 0, method: str = "simulate") -> np.ndarray:
    """``P_omega(|X_n / n - w| < delta)`` for each ``n``, by simulation or from the
    exact quenched law of ``X_n`` (``method="exact"``, ``samples`` unused)."""
    out = []
    for gi, n in enumerate(n_grid):
        n = int(n)
        if method == "exact":
            lo, probs = exact1d.quenched_distribution(env, 0, n, direct_limit=math.inf)
            x = lo + np.arange(len(probs))
            out.append(float(probs[np.abs(x / n - w) < delta].sum()))
        elif method == "simulate":
            ends = quenched_endpoints(env, n, samples, exact1d_seed(master_seed, gi))
            out.append(np.count_nonzero(np.abs(ends / n - w) < delta) / samples)
        else:
            raise ValueError(f"unknown method {method!r}")
    return np.array(out)


@dataclass(frozen=True)
class QuenchedSlowdownReport:
    fit: ExponentFit
    target: float                 # 1 - 1/s
    bracket: tuple[float, float]  # target -+ eta
    probabilities: np.ndarray

    @property
    def inside(self) -> bool:
        return self.bracket[0] <= self.fit.slope <= self.bracket[1]


def slowdown_quenched_diagnostic(env: Environment, w: float, delta: float, n_grid, samples: int,
                                 master_seed: int = 0, eta: float = 0.3,
                                 method: str = "simulate") -> QuenchedSlowdownReport:
    """Fit of ``log(-log p_n)`` against ``log n`` for one environment.

    Reported against the corridor ``[1 - 1/s - eta, 1 - 1/s + eta]`` rather
    than as a point claim. For ``s = inf`` the target is 1 (exponential decay).
    """
    spec = env.spec
    _check_slowdown(spec, w)
    s = exact1d.s_parameter(spec)
    target = 1.0 if math.isinf(s) else 1.0 - 1.0 / s
    p = quenched_slowdown_probabilities(env, w, delta, n_grid, samples, master_seed, method)
    fit = _fit_dropping_zeros(n_grid, np.where(p < 1, p, 0.0), lambda q: np.log(-np.log(q)))
    return QuenchedSlowdownReport(fit, target, (target - eta, target + eta), p)


# -- Sinai regime ---------------------------------------------------------------------

def aging_formula(h: float) -> float:
    """Limit of ``P(|X_{n^h} - X_n| < eta (log n)^2)`` as ``n -> inf`` then ``eta -> 0``."""
    return (5.0 / 3.0 - (2.0 / 3.0) * math.exp(-(h - 1.0))) / h ** 2


def _require_recurrent(spec: EnvironmentSpec):
    if exact1d.classify(spec) != "recurrent":
        raise SpecError("the Sinai-regime estimators need a recurrent law (E log rho = 0)")


def aging_correlator(spec: EnvironmentSpec, n: int, h: float, eta: float, samples: int,
                     master_seed: int = 0, method: str = "auto") -> EstimateWithCI:
    """Estimate of ``P(|X_{n^h} - X_n| < eta (log n)^2)`` under the annealed law.

    ``method="exact"`` simulates ``X_n`` and then averages the exact quenched
    probability of the event given ``(omega, X_n)`` (conditional Monte Carlo);
    ``"simulate"`` runs both time points. ``"auto"`` simulates when
    ``n^h <= 10^6``.
    """
    _require_recurrent(spec)
    if h == 1:
        return EstimateWithCI(1.0, 1.0, 1.0, samples, "identity")
    if h < 1:
        raise ValueError("h must be at least 1")
    t2 = int(round(n ** h))
    radius = eta * math.log(n) ** 2
    if method == "auto":
        method = "simulate" if t2 <= 10**6 else "exact"
    master = as_seed(master_seed)
    if method == "simulate" and spec.kind in ("constant", "finite_support"):
        vals = np.asarray(spec.values, dtype=float)
        cum = _cum((1.0,) if spec.kind == "constant" else spec.probs)
        x1 = np.empty(samples, dtype=np.int64)
        x2 = np.empty(samples, dtype=np.int64)
        annealed_two_times1d(vals, cum, master, n, t2, 0, x1, x2)
        hits = np.abs(x2 - x1) < radius
        return mean_ci(hits.astype(float), "simulate")
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    probs = np.empty(samples)
    out = np.empty(n + 1, dtype=np.int64)
    for k in range(samples):
        es, ws = walker_seeds(master, k)
        env = Environment(spec, es)
        walk1d(*env.kernel_args(-n - 1, n + 1), ws, 0, n, out)
        probs[k] = exact1d.quenched_ball_probability(env, int(out[-1]), t2 - n, radius)
    return mean_ci(probs, "conditional-exact")


@dataclass(frozen=True)
class LocalizationReport:
    n: np.ndarray
    fractions: list
    bottoms: np.ndarray   # (samples, len(n)) valley bottoms, for reuse


def sinai_localization(spec: EnvironmentSpec, n_grid, samples: int, eta: float = 0.5,
                       master_seed: int = 0, env_transform=None) -> LocalizationReport:
    """Fraction of walkers with ``|X_n / (log n)^2 - B_n| < eta`` for each ``n``.

    ``env_transform`` maps each sampled environment (e.g. to its mirror image)
    before the walk and the valley are computed.
    """
    _require_recurrent(spec)
    master = as_seed(master_seed)
    n_grid = [int(n) for n in n_grid]
    fractions = []
    bottoms = np.empty((samples, len(n_grid)), dtype=np.int64)
    for gi, n in enumerate(n_grid):
        hits = 0
        out = np.empty(n + 1, dtype=np.int64)
        for k in range(samples):
            es, ws = walker_seeds(master, k)
            env = Environment(spec, es)
            if env_transform is not None:
                env = env_transform(env, n)
            valley = exact1d.sinai_valley(env, n)
            bottoms[k, gi] = valley.bottom
            walk1d(*env.kernel_args(-n - 1, n + 1), ws, 0, n, out)
            if abs(out[-1] / math.log(n) ** 2 - valley.scaled_bottom) < eta:
                hits += 1
        fractions.append(proportion_ci(hits, samples))
    return LocalizationReport(np.array(n_grid), fractions, bottoms)


# -- stable scaling --------------------------------------------------------------------

def stable_scaling(spec: EnvironmentSpec, n_grid, samples: int, master_seed: int = 0,
                   quantiles=(0.1, 0.9), max_steps_factor: int = 1000) -> ExponentFit:
    """Slope of ``log(q_0.9(T_n) - q_0.1(T_n))`` against ``log n``; compares with ``1/s``
    (or 1/2 when ``s > 2``)."""
    if spec.kind not in ("constant", "finite_support"):
        raise SpecError("stable_scaling takes an i.i.d. law")
    v = exact1d.speed(spec)
    if not v > 0:
        raise SpecError("stable_scaling needs a positive-speed law")
    spreads = []
    for gi, n in enumerate(n_grid):
        cap = int(max_steps_factor * n / v)
        T = annealed_passage_times(spec, samples, exact1d_seed(master_seed, gi), int(n), cap)
        T = np.where(T < 0, np.inf, T.astype(float))
        lo, hi = np.quantile(T, quantiles)
        if not math.isfinite(hi):
            raise RuntimeError("upper quantile censored; raise max_steps_factor")
        spreads.append(hi - lo)
    return ExponentFit.from_points(n_grid, np.log(spreads))


# -- distribution equality -------------------------------------------------------------

@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float
    n_bins: int


def _category_ids(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim == 1:
        a, b = a[:, None], b[:, None]
    vals, ids = np.unique(np.vstack([a, b]), axis=0, return_inverse=True)
    ids = ids.reshape(-1)
    return ids[:len(a)], ids[len(a):], len(vals)


def distribution_equality_test(sample_a, sample_b, min_expected: float = 5.0) -> ChiSquareReport:
    """Two-sample chi-square homogeneity test on lattice values.

    Categories are taken in lexicographic order and adjacent ones are merged
    until every expected count is at least ``min_expected``.
    """
    ia, ib, k = _category_ids(sample_a, sample_b)
    ca = np.bincount(ia, minlength=k).astype(float)
    cb = np.bincount(ib, minlength=k).astype(float)
    na, nb = ca.sum(), cb.sum()
    fa, fb = na / (na + nb), nb / (na + nb)
    bins_a, bins_b = [], []
    acc_a = acc_b = 0.0
    for x, y in zip(ca, cb):
        acc_a += x
        acc_b += y
        if (acc_a + acc_b) * min(fa, fb) >= min_expected:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
            acc_a = acc_b = 0.0
    if acc_a + acc_b > 0:
        if bins_a:
            bins_a[-1] += acc_a
            bins_b[-1] += acc_b
        else:
            bins_a.append(acc_a)
            bins_b.append(acc_b)
    if len(bins_a) < 2:
        return ChiSquareReport(0.0, 0, 1.0, len(bins_a))
    table = np.array([bins_a, bins_b])
    chi2, p, dof, _ = sps.chi2_contingency(table, correction=False)
    return ChiSquareReport(float(chi2), int(dof), float(p), len(bins_a))


# -- T' diagnostic -------------------------------------------------------------------------

@dataclass(frozen=True)
class TPrimeDiagnostic:
    mean: float
    n: int
    top_share: float
    dominated: bool
    label: str = "diagnostic only; not a verification of the T' condition"


def tprime_moment_diagnostic(runs, c: float, gamma: float, direction=None) -> TPrimeDiagnostic:
    """Empirical ``E exp(c sup_{n < d_1} |X_n|^gamma)`` over walkers.

    ``runs`` is a sequence of trajectories or ``(trajectory, decomposition)``
    pairs. A run without a confirmed regeneration time means the walk is not
    ballistic at this horizon and is rejected.
    """
    vals = []
    for item in runs:
        traj, dec = item if isinstance(item, tuple) else (item, None)
        if dec is None:
            dec = regeneration_times(traj, direction)
        if not isinstance(dec, RegenerationDecomposition) or len(dec.confirmed_times()) == 0:
            raise ValueError("no confirmed regeneration time: walk is not ballistic at this horizon")
        d1 = int(dec.times[0])
        pos = traj.positions[:max(d1, 1)]
        norm = np.abs(pos) if pos.ndim == 1 else np.abs(pos).sum(axis=1)
        vals.append(c * float(norm.max()) ** gamma)
    logs = np.array(vals)
    mx = logs.max()
    w = np.exp(logs - mx)
    total = w.sum()
    mean = float(math.exp(mx) * total / len(logs)) if mx < 700 else math.inf
    share = float(w.max() / total)
    return TPrimeDiagnostic(mean, len(logs), share, share > 0.5)
