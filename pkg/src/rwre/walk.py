"""Trajectory samplers: quenched, annealed, coupled and product-structure walks.

Every walk is a pure function of its seeds. Step ``i`` of a walk reads the
uniform ``(walk_seed, step stream, i)``, so a walker can be replayed alone.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rwre import _kernels as K
from rwre._hashing import as_seed, walker_seeds
from rwre.env import Environment, EnvironmentSpec, SpecError

# binary record layout: step index then d coordinates, all little-endian int64
RECORD_DTYPE = np.dtype("<i8")


@dataclass(frozen=True)
class RUIRecord:
    """Product-walk bookkeeping: the walk ``R`` in the first five coordinates,
    the clock bits ``I_n`` and their partial sums ``U_n = sum_{i<n} I_i``."""

    R: np.ndarray      # (U_N + 1, 5)
    I: np.ndarray      # (N,)
    U: np.ndarray      # (N + 1,)


@dataclass(frozen=True)
class Trajectory:
    """Positions ``X_0..X_N``; shape ``(N+1,)`` in 1D, ``(N+1, d)`` on a lattice.

    ``coin_record`` holds the coupling coins: 0 for the zero coin and ``j + 1``
    for the unit vector with direction index ``j`` (``+e1, -e1, +e2, ...``);
    in 1D this is ``+1`` / ``-1`` for ``+-e1``.
    """

    positions: np.ndarray
    env_seed: int
    walk_seed: int
    coin_record: np.ndarray | None = None
    rui_record: RUIRecord | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return 1 if self.positions.ndim == 1 else self.positions.shape[1]

    @property
    def n_steps(self) -> int:
        return self.positions.shape[0] - 1

    def projection(self, direction=None) -> np.ndarray:
        """``X_n . l`` as an integer array (``l = e1`` by default)."""
        if self.positions.ndim == 1:
            if direction is not None and np.ndim(direction) and len(direction) != 1:
                raise ValueError("direction does not match the walk dimension")
            return self.positions if direction is None or np.ravel(direction)[0] > 0 else -self.positions
        if direction is None:
            return self.positions[:, 0].copy()
        return self.positions @ np.asarray(direction, dtype=np.int64)

    def check_unit_steps(self) -> bool:
        steps = np.diff(self.positions, axis=0)
        return bool(np.all(np.abs(steps).reshape(len(steps), -1).sum(axis=1) == 1))


@dataclass(frozen=True)
class CouplingParams:
    eps: float
    dimension: int = 1

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if 1.0 - self.eps * self.dimension <= 0:
            raise ValueError("coupling needs 1 - eps * d > 0")

    def check_law(self, spec: EnvironmentSpec):
        """Reject ``eps`` with ``eps / 2`` above some transition probability of the law."""
        if spec.dimension != self.dimension:
            raise SpecError("coupling dimension differs from the environment's")
        if spec.kind == "lattice_product":
            low = min(min(v) for v in spec.values)
        else:
            low = min(min(v, 1.0 - v) for v in spec.values)
        if self.eps / 2 > low + 1e-12:
            raise ValueError(f"eps/2 = {self.eps / 2} exceeds the smallest transition probability {low}")


# -- 1D and lattice walks -------------------------------------------------------

def _args1d(env: Environment, start: int, n: int):
    return env.kernel_args(start - n - 1, start + n + 1)


def run_quenched(env: Environment, start=0, N: int = 1000, walk_seed: int = 0) -> Trajectory:
    ws = as_seed(walk_seed)
    if env.dimension == 1:
        out = np.empty(N + 1, dtype=np.int64)
        K.walk1d(*_args1d(env, int(start), N), ws, int(start), N, out)
    else:
        st = np.zeros(env.dimension, dtype=np.int64) if np.ndim(start) == 0 else np.asarray(start, dtype=np.int64)
        out = np.empty((N + 1, env.dimension), dtype=np.int64)
        K.walkd(*env.lattice_args(), ws, st, N, out)
    return Trajectory(out, env.seed, walk_seed)


def run_annealed(spec: EnvironmentSpec, N: int, n_walkers: int, master_seed: int,
                 endpoints_only: bool = False, first: int = 0):
    """Walkers ``first .. first + n_walkers - 1``, each in its own environment.

    Walker ``k`` uses ``walker_seeds(master_seed, k)``. With ``endpoints_only``
    returns the array of ``X_N`` instead of full trajectories.
    """
    master = as_seed(master_seed)
    if endpoints_only and spec.kind in ("constant", "finite_support"):
        out = np.empty(n_walkers, dtype=np.int64)
        probs = (1.0,) if spec.kind == "constant" else spec.probs
        vals = np.asarray(spec.values, dtype=float)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        K.annealed_endpoints1d(vals, cum, master, N, first, out)
        return out
    trajs = []
    for k in range(first, first + n_walkers):
        es, ws = walker_seeds(master, k)
        trajs.append(run_quenched(Environment(spec, es), 0, N, ws))
    if endpoints_only:
        return np.array([t.positions[-1] for t in trajs])
    return trajs


def quenched_endpoints(env: Environment, N: int, n_walkers: int, master_seed: int, start: int = 0,
                       coupling: CouplingParams | None = None) -> np.ndarray:
    """``X_N`` of independent walkers in one fixed environment (walk seeds split from the master)."""
    master = as_seed(master_seed)
    if env.dimension == 1:
        out = np.empty(n_walkers, dtype=np.int64)
        if coupling is None:
            K.quenched_endpoints1d(*_args1d(env, start, N), master, start, N, out)
        else:
            coupling.check_law(env.spec)
            K.coupled_endpoints1d(*_args1d(env, start, N), master, coupling.eps, start, N, out)
        return out
    out = np.empty((n_walkers, env.dimension), dtype=np.int64)
    eps = 0.0 if coupling is None else coupling.eps
    if coupling is not None:
        coupling.check_law(env.spec)
    K.endpointsd(*env.lattice_args(), master, eps, coupling is not None, N, out)
    return out


def run_coupled(env: Environment, params: CouplingParams, N: int, walk_seed: int = 0, start=0) -> Trajectory:
    """Walk under the coin coupling: with probability ``eps/2`` per unit vector the coin
    forces the step, otherwise the step follows ``(omega - eps/2) / (1 - d eps)``."""
    params.check_law(env.spec)
    ws = as_seed(walk_seed)
    coins = np.empty(N, dtype=np.int64)
    if env.dimension == 1:
        out = np.empty(N + 1, dtype=np.int64)
        K.coupled1d(*_args1d(env, int(start), N), ws, params.eps, int(start), N, out, coins)
    else:
        st = np.zeros(env.dimension, dtype=np.int64) if np.ndim(start) == 0 else np.asarray(start, dtype=np.int64)
        out = np.empty((N + 1, env.dimension), dtype=np.int64)
        K.coupledd(*env.lattice_args(), ws, params.eps, st, N, out, coins)
    return Trajectory(out, env.seed, walk_seed, coin_record=coins)


def coupled_step_law(omega_right: float, eps: float) -> float:
    """One-step probability of a right move under the 1D coupled kernel."""
    return eps / 2 + (1.0 - eps) * (omega_right - eps / 2) / (1.0 - eps)


# -- product-structure walk ------------------------------------------------------

def product_walk_spec(residual: EnvironmentSpec, q) -> EnvironmentSpec:
    """Full lattice law: fixed ``q`` on ``+-e1..+-e5`` and ``(1 - S)`` times the
    residual law on the remaining coordinates."""
    q = np.asarray(q, dtype=float)
    if q.shape != (10,) or (q <= 0).any():
        raise ValueError("q must hold ten positive probabilities (+e1, -e1, ..., +e5, -e5)")
    S = float(q.sum())
    if S >= 1.0:
        raise ValueError(f"S = {S} must be below 1")
    if residual.kind != "lattice_product":
        raise SpecError("the residual law is a lattice_product law on the remaining coordinates")
    atoms = [(tuple(q) + tuple((1.0 - S) * np.asarray(v)), p)
             for v, p in zip(residual.values, residual.probs)]
    return EnvironmentSpec.lattice_product(5 + residual.dimension, atoms, require_elliptic=False)


def run_product_walk(residual: EnvironmentSpec, q, N: int, env_seed: int, walk_seed: int) -> Trajectory:
    """Walk whose first five coordinates move by the fixed kernel ``q``.

    Clock bits ``I_n ~ Bernoulli(S)`` decide between a ``q/S`` step of ``R``
    (indexed by ``R``'s own time ``U_n``) and a residual step from the
    environment kernel normalized by ``1 - S``. Asserts ``X_n^1 = R_{U_n}``.
    """
    spec = product_walk_spec(residual, q)
    env = Environment(spec, env_seed)
    vecs, cum, es = env.lattice_args()
    d = spec.dimension
    pos = np.empty((N + 1, d), dtype=np.int64)
    ibits = np.empty(N, dtype=np.int8)
    rpath = np.zeros((N + 1, 5), dtype=np.int64)
    upath = np.empty(N + 1, dtype=np.int64)
    un = K.product_walk(vecs, cum, es, as_seed(walk_seed), N, pos, ibits, rpath, upath)
    rec = RUIRecord(rpath[:un + 1].copy(), ibits, upath)
    if not np.array_equal(pos[:, :5], rec.R[upath]):
        raise AssertionError("product walk broke the identity X^1_n = R_{U_n}")
    return Trajectory(pos, env_seed, walk_seed, rui_record=rec, meta={"S": float(np.sum(q))})


run_theorem2 = run_product_walk     # name used by the API contract


def sample_R(q, walk_seed: int, n: int) -> np.ndarray:
    """The ``q/S`` walk in ``Z^5`` driven by the same stream as :func:`run_product_walk`."""
    q = np.asarray(q, dtype=float)
    out = np.empty((n + 1, 5), dtype=np.int64)
    K.simple_walk_path((q / q.sum()).reshape(1, 10), as_seed(walk_seed), n, out)
    return out


# -- hitting times -----------------------------------------------------------------

@dataclass(frozen=True)
class HittingTimes:
    """``T[n-1]`` is the first time ``X . l`` reaches ``n`` (``n = 1..len(T)``);
    ``tau[i-1] = T_{i+1} - T_i``. Levels ``len(T)+1 .. max_level`` are censored."""

    T: np.ndarray
    tau: np.ndarray
    censored_levels: np.ndarray
    horizon: int


def hitting_times(traj: Trajectory, direction=None, max_level: int | None = None) -> HittingTimes:
    Z = traj.projection(direction)
    runmax = np.maximum.accumulate(Z)
    top = int(max(runmax[-1], 0))
    levels = np.arange(1, top + 1)
    T = np.searchsorted(runmax, levels, side="left").astype(np.int64)
    cens = np.arange(top + 1, (max_level or top) + 1)
    return HittingTimes(T, np.diff(T), cens, traj.n_steps)


def annealed_passage_times(spec: EnvironmentSpec, n_walkers: int, master_seed: int, level: int = 1,
                           max_steps: int = 10**7, first: int = 0) -> np.ndarray:
    """First time annealed walkers reach ``level``; ``-1`` marks censoring at ``max_steps``."""
    if spec.kind not in ("constant", "finite_support"):
        raise SpecError("annealed passage sampling needs an i.i.d. one-dimensional law")
    probs = (1.0,) if spec.kind == "constant" else spec.probs
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    out = np.empty(n_walkers, dtype=np.int64)
    K.annealed_passage1d(np.asarray(spec.values, dtype=float), cum, as_seed(master_seed),
                         level, max_steps, first, out)
    return out


def quenched_passage_times(env: Environment, n_walkers: int, master_seed: int, level: int,
                           start: int = 0, max_steps: int = 10**7) -> np.ndarray:
    out = np.empty(n_walkers, dtype=np.int64)
    K.quenched_passage1d(*env.kernel_args(start - max_steps - 1, start + max_steps + 1),
                         as_seed(master_seed), start, level, max_steps, out)
    return out


def exit_left_frequency(env: Environment, m_minus: int, m_plus: int, z: int, n_trials: int,
                        master_seed: int) -> float:
    """Monte Carlo frequency of leaving ``(-m_minus, m_plus)`` on the left."""
    hits = K.exit_left_count1d(*env.kernel_args(-m_minus, m_plus), as_seed(master_seed),
                               -m_minus, m_plus, z, n_trials)
    return hits / n_trials


# -- persistence ---------------------------------------------------------------

def write_records(traj: Trajectory, path, spec_label: str = "") -> tuple[Path, Path]:
    """Binary records ``(n, x_1..x_d)`` plus a ``.hdr`` text sidecar."""
    path = Path(path)
    pos = traj.positions.reshape(traj.n_steps + 1, -1)
    rec = np.empty((pos.shape[0], pos.shape[1] + 1), dtype=RECORD_DTYPE)
    rec[:, 0] = np.arange(pos.shape[0])
    rec[:, 1:] = pos
    path.write_bytes(rec.tobytes())
    hdr = path.with_suffix(path.suffix + ".hdr")
    hdr.write_text(f"spec = {spec_label}\nenv_seed = {traj.env_seed}\nwalk_seed = {traj.walk_seed}\n"
                   f"N = {traj.n_steps}\nd = {pos.shape[1]}\nlayout = <i8 n, <i8 x[d]\n")
    return path, hdr


def read_records(path) -> Trajectory:
    path = Path(path)
    meta = {}
    for line in path.with_suffix(path.suffix + ".hdr").read_text().splitlines():
        k, _, v = line.partition("=")
        meta[k.strip()] = v.strip()
    d = int(meta["d"])
    rec = np.frombuffer(path.read_bytes(), dtype=RECORD_DTYPE).reshape(-1, d + 1)
    pos = rec[:, 1:].astype(np.int64)
    if d == 1:
        pos = pos[:, 0]
    return Trajectory(pos, int(meta["env_seed"]), int(meta["walk_seed"]), meta=meta)


def export_projection_csv(traj: Trajectory, path, direction=None, stride: int = 1):
    Z = traj.projection(direction)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "x_dot_l"])
        for n in range(0, len(Z), stride):
            w.writerow([n, int(Z[n])])


def velocities(endpoints: np.ndarray, N: int) -> np.ndarray:
    return np.asarray(endpoints, dtype=float).reshape(len(endpoints), -1)[:, 0] / N


def backtrack_depth(traj: Trajectory) -> int:
    """``max_n X_n - X_N`` along the first coordinate."""
    Z = traj.projection()
    return int(Z.max() - Z[-1])

