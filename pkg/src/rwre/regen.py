"""Path decompositions: fresh times, regeneration times and cut times.

Infinite-future conditions are checked up to a finite horizon ``H``; the last
accepted time is flagged censored because its condition cannot be confirmed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from rwre.estimate import (EstimateWithCI, lag1_autocorrelation, permutation_pvalue,
                           ratio_bootstrap)
from rwre.walk import Trajectory


@dataclass(frozen=True)
class Slab:
    duration: int
    displacement: np.ndarray
    z_range: tuple[int, int]   # half-open [Z_{d_i}, Z_{d_{i+1}})
    censored: bool


@dataclass(frozen=True)
class RegenerationDecomposition:
    direction: tuple
    times: np.ndarray
    levels: np.ndarray
    slabs: list
    horizon: int
    censored_last: bool = True

    def usable_slabs(self, drop_first: bool = True) -> list:
        """Uncensored slabs; the first slab is dropped (the i.i.d. property starts at i = 2)."""
        slabs = [s for s in self.slabs if not s.censored]
        return slabs[1:] if drop_first else slabs

    def confirmed_times(self) -> np.ndarray:
        return self.times[:-1] if self.censored_last and len(self.times) else self.times


@dataclass(frozen=True)
class CutDecomposition:
    times: np.ndarray
    margin: int
    horizon: int

    @property
    def density(self) -> float:
        span = self.horizon - 2 * self.margin + 1
        return len(self.times) / span if span > 0 else 0.0


# -- fresh and regeneration times ----------------------------------------------------

def fresh_times(Z) -> np.ndarray:
    """Times ``t`` with ``Z_t > Z_n`` for all ``n < t``; ``t = 0`` counts as fresh."""
    Z = np.asarray(Z)
    if Z.size == 0:
        return np.empty(0, dtype=np.int64)
    prev_max = np.maximum.accumulate(Z)[:-1]
    fresh = np.concatenate([[True], Z[1:] > prev_max])
    return np.nonzero(fresh)[0]


def _suffix_min_after(Z: np.ndarray) -> np.ndarray:
    # m[t] = min(Z[t+1:]); +inf past the end
    m = np.minimum.accumulate(Z[::-1])[::-1]
    return np.concatenate([m[1:], [np.iinfo(np.int64).max]])


def _projection(traj, direction):
    if isinstance(traj, Trajectory):
        return traj.projection(direction), traj.positions
    Z = np.asarray(traj, dtype=np.int64)
    return Z, Z


def _decomposition(times, Z, positions, direction, H) -> RegenerationDecomposition:
    slabs = []
    for i in range(len(times) - 1):
        a, b = int(times[i]), int(times[i + 1])
        slabs.append(Slab(b - a, np.atleast_1d(positions[b] - positions[a]),
                          (int(Z[a]), int(Z[b])), censored=(i == len(times) - 2)))
    dir_t = tuple(np.atleast_1d(direction).tolist()) if direction is not None else (1,)
    return RegenerationDecomposition(dir_t, np.asarray(times, dtype=np.int64),
                                     Z[np.asarray(times, dtype=np.int64)], slabs, H)


def regeneration_times(traj, direction=None, horizon: int | None = None) -> RegenerationDecomposition:
    """Fresh times ``t <= H`` with ``Z_n >= Z_t`` for every ``n`` in ``(t, H]``.

    ``traj`` is a :class:`Trajectory` or an integer sequence ``Z``.
    """
    Z, pos = _projection(traj, direction)
    H = len(Z) - 1 if horizon is None else int(horizon)
    if H > len(Z) - 1:
        raise ValueError(f"horizon {H} exceeds the trajectory length {len(Z) - 1}")
    Zh = Z[:H + 1]
    fresh = fresh_times(Zh)
    ok = _suffix_min_after(Zh)[fresh] >= Zh[fresh]
    return _decomposition(fresh[ok], Zh, pos, direction, H)


def modified_regeneration_times(traj: Trajectory, L: int, u, direction=None,
                                horizon: int | None = None) -> np.ndarray:
    """Regeneration times ``t`` whose next ``L`` coins equal ``u_1..u_L``.

    ``u`` holds coin codes as in :attr:`Trajectory.coin_record` (in 1D, ``+1``
    is ``+e1``); the coin of step ``t + i`` moves ``X_{t+i-1}`` to ``X_{t+i}``.
    """
    if traj.coin_record is None:
        raise ValueError("trajectory carries no coin record")
    u = np.asarray(u, dtype=np.int64)
    if len(u) != L or L < 1:
        raise ValueError("u must hold L >= 1 coins")
    prog = _coin_progress(u, traj.dimension, direction)
    if (prog <= 0).any() or prog.sum() < L / 2:
        raise ValueError("coins must each advance along l and total at least L/2")
    Z, _ = _projection(traj, direction)
    H = len(Z) - 1 if horizon is None else int(horizon)
    dec = regeneration_times(traj, direction, H)
    coins = traj.coin_record
    t = dec.times[dec.times + L <= min(H, len(coins))]
    match = np.ones(len(t), dtype=bool)
    for i in range(L):
        match &= coins[t + i] == u[i]
    return t[match]


def _coin_progress(u, d, direction) -> np.ndarray:
    ell = np.zeros(d, dtype=np.int64)
    if direction is None:
        ell[0] = 1
    else:
        ell[:] = np.atleast_1d(direction)
    out = np.empty(len(u))
    for i, c in enumerate(u):
        if d == 1:
            vec = np.array([c])
        else:
            if c < 1 or c > 2 * d:
                raise ValueError(f"coin code {c} is not a unit vector")
            vec = np.zeros(d, dtype=np.int64)
            vec[(c - 1) // 2] = 1 if (c - 1) % 2 == 0 else -1
        if np.abs(vec).sum() != 1:
            raise ValueError(f"coin code {c} is not a unit vector")
        out[i] = vec @ ell
    return out


# -- slab statistics -----------------------------------------------------------------

@dataclass(frozen=True)
class IIDReport:
    n_slabs: int
    r1_duration: float
    p_duration: float
    r1_displacement: float
    p_displacement: float
    level: float

    @property
    def passed(self) -> bool:
        # Bonferroni over the two statistics
        return min(self.p_duration, self.p_displacement) > self.level / 2


def _pool(decomps):
    if isinstance(decomps, RegenerationDecomposition):
        decomps = [decomps]
    slabs = []
    for d in decomps:
        slabs.extend(d.usable_slabs())
    return slabs


def iid_check_series(durations, displacements, level: float = 0.01, n_perm: int = 999,
                     seed: int = 0) -> IIDReport:
    r_d, p_d = permutation_pvalue(durations, n_perm, seed)
    r_x, p_x = permutation_pvalue(displacements, n_perm, seed + 1)
    return IIDReport(len(durations), r_d, p_d, r_x, p_x, level)


def slabs_iid_check(decomp, level: float = 0.01, n_perm: int = 999, seed: int = 0) -> IIDReport:
    """Lag-1 autocorrelation of slab durations and displacements with permutation p-values."""
    slabs = _pool(decomp)
    if len(slabs) < 30:
        raise ValueError(f"{len(slabs)} usable slabs; at least 30 are needed")
    dur = np.array([s.duration for s in slabs], dtype=float)
    disp = np.array([s.displacement[0] for s in slabs], dtype=float)
    return iid_check_series(dur, disp, level, n_perm, seed)


def lln_via_regeneration(decomp, n_boot: int = 2000, seed: int = 0) -> EstimateWithCI:
    """Mean slab displacement over mean slab duration, resampling whole slabs."""
    slabs = _pool(decomp)
    if len(slabs) < 30:
        raise ValueError(f"{len(slabs)} usable slabs; at least 30 are needed")
    dur = np.array([s.duration for s in slabs], dtype=float)
    disp = np.array([s.displacement[0] for s in slabs], dtype=float)
    return ratio_bootstrap(disp, dur, n_boot, seed, "regeneration-slabs")


# -- cut times -------------------------------------------------------------------------

def _vertex_ids(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R)
    if R.ndim == 1:
        R = R[:, None]
    _, ids = np.unique(R, axis=0, return_inverse=True)
    return ids.reshape(-1)


def cut_times(R, horizon: int | None = None, margin: int = 1000) -> CutDecomposition:
    """Times ``t`` in ``[M, H - M]`` such that ``{R_n : t - M <= n < t}`` and
    ``{R_n : t <= n <= t + M}`` are disjoint.

    A time is blocked exactly when some pair of consecutive visits ``i < j`` to
    one vertex satisfies ``i < t <= j``, ``i >= t - M`` and ``j <= t + M``; the
    blocked intervals are accumulated with a difference array.
    """
    R = np.asarray(R)
    H = len(R) - 1 if horizon is None else int(horizon)
    if H > len(R) - 1:
        raise ValueError("horizon exceeds the path length")
    if 2 * margin >= H:
        raise ValueError("margin must be below H/2")
    ids = _vertex_ids(R[:H + 1])
    order = np.argsort(ids, kind="stable")
    same = ids[order[1:]] == ids[order[:-1]]
    i = order[:-1][same]
    j = order[1:][same]
    lo = np.maximum(i + 1, j - margin)
    hi = np.minimum(j, i + margin)
    keep = lo <= hi
    diff = np.zeros(H + 2, dtype=np.int64)
    np.add.at(diff, lo[keep], 1)
    np.add.at(diff, hi[keep] + 1, -1)
    blocked = np.cumsum(diff)[:H + 1] > 0
    t = np.arange(H + 1)
    ok = ~blocked & (t >= margin) & (t <= H - margin)
    return CutDecomposition(t[ok], margin, H)


def verify_cut(R, t: int, margin: int, horizon: int | None = None) -> bool:
    """Direct set intersection check for one candidate time."""
    R = np.asarray(R)
    H = len(R) - 1 if horizon is None else horizon
    past = {tuple(np.atleast_1d(v)) for v in R[max(t - margin, 0):t]}
    future = {tuple(np.atleast_1d(v)) for v in R[t:min(t + margin, H) + 1]}
    return not (past & future)


@dataclass(frozen=True)
class CutIncrements:
    times: np.ndarray          # X-times of the cuts
    durations: np.ndarray
    increments: np.ndarray     # residual-coordinate displacement between cuts


def cut_increments(traj: Trajectory, cuts: CutDecomposition, coordinate: int = 5) -> CutIncrements:
    """Map cut times of ``R`` to walk times (first ``n`` with ``U_n = c``) and
    collect residual-coordinate increments between consecutive cuts."""
    if traj.rui_record is None:
        raise ValueError("trajectory carries no R/I/U record")
    U = traj.rui_record.U
    n = np.searchsorted(U, cuts.times, side="left")
    n = n[n < len(U)]
    x2 = traj.positions[n, coordinate]
    return CutIncrements(n, np.diff(n), np.diff(x2))


def _block_sums(x: np.ndarray, size: int) -> np.ndarray:
    n = len(x) // size * size
    out = x[:n].reshape(-1, size).sum(axis=1)
    return np.append(out, x[n:].sum()) if n < len(x) else out


def lln_via_cutpoints(pieces, n_boot: int = 2000, seed: int = 0,
                      max_blocks: int = 2000) -> tuple[EstimateWithCI, float, float]:
    """Residual-coordinate velocity from cut increments (pooled over walkers).

    Increments are summed over contiguous blocks inside each walker (at most
    about ``max_blocks`` blocks in total) and whole blocks are resampled, which
    keeps the bootstrap cheap and absorbs short-range dependence.

    Returns (estimate, lag-1 autocorrelation of increments, permutation p-value).
    """
    if isinstance(pieces, CutIncrements):
        pieces = [pieces]
    total = sum(len(p.durations) for p in pieces)
    if total < 30:
        raise ValueError(f"{total} cut increments; at least 30 are needed")
    size = max(1, -(-total // max_blocks))
    dur = np.concatenate([_block_sums(p.durations.astype(float), size) for p in pieces if len(p.durations)])
    inc = np.concatenate([_block_sums(p.increments.astype(float), size) for p in pieces if len(p.durations)])
    est = ratio_bootstrap(inc, dur, n_boot, seed, "cut-increments")
    longest = max(pieces, key=lambda p: len(p.increments)).increments[:5000]
    r1, p = permutation_pvalue(longest, 499, seed) if len(longest) >= 10 else (lag1_autocorrelation(longest), 1.0)
    return est, r1, p


# -- export ----------------------------------------------------------------------------

def export_decomposition_csv(decomp, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if isinstance(decomp, RegenerationDecomposition):
            d = len(decomp.slabs[0].displacement) if decomp.slabs else 1
            w.writerow(["index", "time", "duration"] + [f"dx{k + 1}" for k in range(d)] + ["censored"])
            for i, s in enumerate(decomp.slabs):
                w.writerow([i + 1, int(decomp.times[i]), s.duration, *map(int, s.displacement), int(s.censored)])
        else:
            w.writerow(["index", "time", "duration", "censored"])
            ts = decomp.times
            for i, t in enumerate(ts):
                dur = int(ts[i + 1] - t) if i + 1 < len(ts) else ""
                w.writerow([i + 1, int(t), dur, int(i + 1 == len(ts))])
