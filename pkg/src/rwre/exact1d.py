"""Exact and semi-exact computations for one-dimensional walks.

All quantities use ``rho_x = (1 - omega_x) / omega_x``. The potential
``W(x) = sum_{j=1..x} log rho_j`` (``W(0) = 0``) is the height of the edge
``(x, x+1)``; the walk drifts downhill.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numba import njit
from scipy.linalg import eigh_tridiagonal, solve_banded

from rwre.env import (Environment, EnvironmentSpec, SpecError, log_moment,
                      mean_log_rho, moments, stationary_distribution)

ROOT_TOL = 1e-10
CLASSIFY_TOL = 1e-12
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class UndeterminedError(RuntimeError):
    """A truncated series neither converged nor provably diverged."""


@dataclass(frozen=True)
class Window:
    m_minus: int
    m_plus: int
    z: int = 0

    def __post_init__(self):
        if self.m_minus <= 0 or self.m_plus <= 0:
            raise ValueError("window half-widths must be positive")
        if not -self.m_minus < self.z < self.m_plus:
            raise ValueError(f"start {self.z} is not strictly inside [-{self.m_minus}, {self.m_plus}]")


@dataclass(frozen=True)
class PotentialProfile:
    lo: int
    W: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.lo, self.lo + len(self.W))

    def at(self, x: int) -> float:
        return float(self.W[x - self.lo])

    def trap_average(self, z: int, k: int) -> float:
        """``R_k`` of the environment shifted by ``z``: mean of log rho over ``z+1..z+k``."""
        return (self.at(z + k) - self.at(z)) / k


@dataclass(frozen=True)
class RateFunctionSample:
    argument: float
    value: float
    method: str  # "legendre", "laplace" or "upper_bound"
    detail: str = ""


@dataclass(frozen=True)
class SinaiValley:
    left: int
    right: int
    bottom: int
    n: int

    @property
    def scaled_bottom(self) -> float:
        """``B_n = bottom / (log n)**2``."""
        return self.bottom / math.log(self.n) ** 2


def _require_1d(spec: EnvironmentSpec):
    if spec.kind == "lattice_product":
        raise SpecError("one-dimensional law required")


def _require_product(spec: EnvironmentSpec):
    if spec.kind not in ("constant", "finite_support"):
        raise SpecError(f"product (i.i.d.) one-dimensional law required, got {spec.kind}")


# -- exit probabilities -------------------------------------------------------

def _logsumexp(a: np.ndarray) -> float:
    if a.size == 0:
        return -math.inf
    m = a.max()
    return float(m + np.log(np.exp(a - m).sum()))


def _left_exit_from_logrho(logrho: np.ndarray, lo: int, m_minus: int, m_plus: int, z: int) -> float:
    # logrho[i] = log rho at site lo + i, covering -m_minus+1 .. m_plus-1
    def lr(a, b):  # sites a..b inclusive
        return logrho[a - lo:b - lo + 1]

    right = lr(z + 1, m_plus - 1)
    # i = z+1..m_plus: prod_{j=z+1}^{i-1} rho_j
    num = np.concatenate([[0.0], np.cumsum(right)])
    # i = -m_minus+1..z: prod_{j=i}^{z} 1/rho_j
    left = lr(-m_minus + 1, z)
    den_left = -np.cumsum(left[::-1])
    a = _logsumexp(num)
    b = _logsumexp(den_left)
    return float(1.0 / (1.0 + math.exp(b - a))) if b - a < 700 else 0.0


def exit_probability(env: Environment, window: Window, side: str = "left") -> float:
    """Probability that the walk from ``window.z`` hits ``-m_minus`` before ``m_plus``.

    ``side="right"`` returns the complementary event, computed on the mirrored
    environment rather than as ``1 - left``.
    """
    m, M, z = window.m_minus, window.m_plus, window.z
    if side == "left":
        lo = -m + 1
        return _left_exit_from_logrho(env.log_rho_array(lo, M - 1), lo, m, M, z)
    if side == "right":
        # mirrored walk: omega'_x = 1 - omega_{-x}, so log rho'_x = -log rho_{-x}
        lo = -M + 1
        logrho = -env.log_rho_array(-(m - 1), M - 1)[::-1]
        return _left_exit_from_logrho(logrho, lo, M, m, -z)
    raise ValueError("side must be 'left' or 'right'")


def exit_probability_linear_system(env: Environment, window: Window) -> np.ndarray:
    """Left-exit probabilities from every interior site by solving the absorbing
    chain ``h(x) = omega_x h(x+1) + (1 - omega_x) h(x-1)``, ``h(-m_minus) = 1``,
    ``h(m_plus) = 0``. Returns ``h`` on ``-m_minus+1 .. m_plus-1``."""
    lo, hi = -window.m_minus + 1, window.m_plus - 1
    om = env.omega_array(lo, hi)
    k = len(om)
    ab = np.zeros((3, k))
    ab[0, 1:] = -om[:-1]          # superdiagonal
    ab[1, :] = 1.0
    ab[2, :-1] = -(1.0 - om[1:])  # subdiagonal
    rhs = np.zeros(k)
    rhs[0] = 1.0 - om[0]
    return solve_banded((1, 1), ab, rhs)


# -- classification and speed -------------------------------------------------------

def classify(spec: EnvironmentSpec) -> str:
    u = mean_log_rho(spec)
    if u < -CLASSIFY_TOL:
        return "transient_right"
    if u > CLASSIFY_TOL:
        return "transient_left"
    return "recurrent"


def speed(spec: EnvironmentSpec) -> float:
    """Limit speed of the walk in an i.i.d. environment."""
    _require_product(spec)
    m1 = moments(spec, 1.0)
    m_1 = moments(spec, -1.0)
    if m1 < 1.0:
        return (1.0 - m1) / (1.0 + m1)
    if m_1 < 1.0:
        return -(1.0 - m_1) / (1.0 + m_1)
    return 0.0


def annealed_expected_tau(spec: EnvironmentSpec) -> float:
    _require_product(spec)
    m1 = moments(spec, 1.0)
    return (1.0 + m1) / (1.0 - m1) if m1 < 1.0 else math.inf


def _chain_matrices(spec: EnvironmentSpec):
    """(omega per state, stationary law, leftward transition) for periodic/Markov/constant laws."""
    if spec.kind == "constant":
        return np.asarray(spec.values), np.ones(1), np.ones((1, 1))
    if spec.kind == "periodic":
        p = len(spec.values)
        left = np.zeros((p, p))
        for i in range(p):
            left[i, (i - 1) % p] = 1.0
        return np.asarray(spec.values), np.full(p, 1.0 / p), left
    if spec.kind == "markov":
        mat = np.asarray(spec.transition, dtype=float)
        return np.asarray(spec.values), stationary_distribution(mat), spec.reversed_transition()
    raise SpecError(f"speed_ergodic needs a periodic, Markov or constant law, got {spec.kind}")


def _mirror_chain(omega, pi, left):
    # reading the mirrored environment leftwards is reading the original rightwards
    right = (left.T * pi[None, :]) / pi[:, None]
    return 1.0 - omega, pi, right


def _transfer_series(omega, pi, left, tol, max_terms, cap):
    """Sum of ``pi^T (D P)^k w`` with ``D = diag(rho)``, ``w = 1/omega``.

    Returns the sum, or ``inf`` when the terms do not decay: the ratio of
    consecutive terms tends to the Perron root of ``D P``, so a root ``>= 1``
    means divergence.
    """
    rho = (1.0 - omega) / omega
    dp = rho[:, None] * left
    if np.max(np.abs(np.linalg.eigvals(dp))) >= 1.0 - CLASSIFY_TOL:
        return math.inf
    w = 1.0 / omega
    block = max(8, len(omega))
    row = pi.copy()
    total = 0.0
    history = []
    for k in range(max_terms):
        term = float(row @ w)
        total += term
        history.append(term)
        if total > cap:
            return math.inf
        if k >= 2 * block:
            prev = sum(history[-2 * block:-block])
            last = sum(history[-block:])
            f = last / prev if prev > 0 else 0.0
            if f < 1.0:
                tail = last * f / (1.0 - f)
                if tail < tol * total:
                    return total
            history = history[-2 * block:]
        row = row @ dp
    raise UndeterminedError(f"series undecided after {max_terms} terms")


def speed_ergodic(spec: EnvironmentSpec, tol: float = 1e-12, max_terms: int = 10**6,
                  cap: float = 1e15) -> float:
    """Speed of the walk in a periodic or Markov environment.

    Positive speed when ``sum_i E prod_{j=0..i} rho_{-j}`` converges, negative
    when the same holds for ``1/rho``, zero otherwise. The nonzero value is
    ``1 / E_P E_omega tau_0`` from the same truncated transfer series.
    """
    if spec.kind == "finite_support":
        raise SpecError("speed_ergodic takes periodic or Markov laws; use speed() for i.i.d. laws")
    omega, pi, left = _chain_matrices(spec)
    fwd = _transfer_series(omega, pi, left, tol, max_terms, cap)
    if math.isfinite(fwd):
        return 1.0 / fwd
    back = _transfer_series(*_mirror_chain(omega, pi, left), tol, max_terms, cap)
    if math.isfinite(back):
        return -1.0 / back
    return 0.0


def expected_tau(env: Environment, site: int = 0, tol: float = 1e-12, cap: float = 1e15,
                 max_terms: int = 10**6, chunk: int = 4096) -> float:
    """Quenched mean time to go from ``site`` to ``site + 1``.

    Evaluates ``1/omega_x + rho_x/omega_{x-1} + rho_x rho_{x-1}/omega_{x-2} + ...``
    in blocks; stops once the geometric extrapolation of the last block puts the
    tail below ``tol`` times the partial sum. Returns ``inf`` when partial sums
    pass ``cap`` while the terms grow.
    """
    period = len(env.spec.values) if env.spec.kind == "periodic" else 1
    if env.spec.kind in ("constant", "periodic"):
        om = np.asarray(env.spec.values)
        if np.sum(np.log1p(-om) - np.log(om)) >= -CLASSIFY_TOL:
            return math.inf     # the product of rho over a period does not decay
    else:
        try:
            kind = classify(env.spec)
        except (SpecError, ValueError):
            kind = "transient_right"
        if kind != "transient_right":
            return math.inf     # the potential is unbounded above a.s.
    block = 256 * period
    total = 0.0
    log_prod = 0.0
    recent = []
    done = 0
    while done < max_terms:
        hi = site - done
        lo = hi - chunk + 1
        om = env.omega_array(lo, hi)[::-1]  # om[i] = omega at site - done - i
        logrho = np.log1p(-om) - np.log(om)
        cum = log_prod + np.concatenate([[0.0], np.cumsum(logrho[:-1])])
        terms = np.exp(cum - np.log(om))
        log_prod = cum[-1] + logrho[-1]
        for t in terms:
            total += t
            recent.append(t)
            if total > cap:
                return math.inf
        done += chunk
        while len(recent) >= 2 * block:
            prev = math.fsum(recent[:block])
            last = math.fsum(recent[block:2 * block])
            f = last / prev if prev > 0 else 0.0
            if f < 1.0 and last * f / (1.0 - f) < tol * total:
                return total
            recent = recent[block:]
    raise UndeterminedError(f"expected_tau undecided after {max_terms} terms")


def expected_tau_periodic(omegas) -> np.ndarray:
    """Quenched ``E tau_x`` for each phase of a periodic environment from the
    cyclic linear system ``omega_x t_x = 1 + (1 - omega_x) t_{x-1}``."""
    om = np.asarray(omegas, dtype=float)
    p = len(om)
    a = np.diag(om)
    for x in range(p):
        a[x, (x - 1) % p] -= 1.0 - om[x]
    if p == 1:
        a = np.array([[2 * om[0] - 1.0]])
    t = np.linalg.solve(a, np.ones(p))
    if (t <= 0).any():
        return np.full(p, math.inf)
    return t


# -- s-parameter and Cramer rate -----------------------------------------------------

def _log_rho_support(spec: EnvironmentSpec):
    _require_product(spec)
    om = np.asarray(spec.values, dtype=float)
    w = np.ones(1) if spec.kind == "constant" else np.asarray(spec.probs, dtype=float)
    keep = w > 0
    return np.log1p(-om[keep]) - np.log(om[keep]), w[keep]


def s_parameter(spec: EnvironmentSpec) -> float:
    """Positive root of ``E rho^s = 1``; ``inf`` when ``rho <= 1`` almost surely."""
    _require_product(spec)
    if mean_log_rho(spec) >= 0:
        raise SpecError("s is defined for laws transient to the right (E log rho < 0)")
    logs, _ = _log_rho_support(spec)
    if logs.max() <= 0:
        return math.inf
    lo, hi = 0.0, 1.0
    while log_moment(spec, hi) <= 0:
        lo, hi = hi, 2 * hi
    while hi - lo > ROOT_TOL:
        mid = 0.5 * (lo + hi)
        if log_moment(spec, mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def golden_max(f, a: float, b: float, tol: float = ROOT_TOL) -> tuple[float, float]:
    """Maximize a unimodal ``f`` on ``[a, b]``; returns (argmax, max)."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    best = max((fa for fa in ((a, f(a)), (b, f(b)), (c, fc), (d, fd))), key=lambda p: p[1])
    return best


def cramer_rate(spec: EnvironmentSpec, y: float) -> float:
    """``J(y) = sup_lambda (lambda y - log E rho^lambda)`` for a finite-support law."""
    logs, w = _log_rho_support(spec)
    lmin, lmax = logs.min(), logs.max()
    if y < lmin - 1e-12 or y > lmax + 1e-12:
        return math.inf
    if abs(y - lmax) <= 1e-12:
        return -math.log(w[np.abs(logs - lmax) <= 1e-12].sum())
    if abs(y - lmin) <= 1e-12:
        return -math.log(w[np.abs(logs - lmin) <= 1e-12].sum())

    pairs = [(float(a), math.log(b)) for a, b in zip(logs, w) if b > 0]

    def g(lam):
        # lam * y - log E rho^lam, with the support precomputed
        zs = [lam * a + lb for a, lb in pairs]
        m = max(zs)
        return lam * y - (m + math.log(math.fsum(math.exp(z - m) for z in zs)))

    def slope(lam):
        z = lam * logs + np.log(w)
        p = np.exp(z - z.max())
        return y - float(p @ logs / p.sum())

    lo, hi = -1.0, 1.0
    while slope(lo) <= 0:
        lo *= 2
    while slope(hi) >= 0:
        hi *= 2
    _, val = golden_max(g, lo, hi)
    return max(val, 0.0)


def s_from_rate(spec: EnvironmentSpec, grid: int = 400) -> float:
    """``min_{y > 0} J(y) / y``; equals :func:`s_parameter` when the latter is finite."""
    _require_product(spec)
    if mean_log_rho(spec) >= 0:
        raise SpecError("s is defined for laws transient to the right (E log rho < 0)")
    logs, _ = _log_rho_support(spec)
    lmax = logs.max()
    if lmax <= 0:
        return math.inf
    ys = np.linspace(lmax / grid, lmax, grid)
    vals = np.array([cramer_rate(spec, y) / y for y in ys])
    i = int(np.argmin(vals))
    a = ys[max(i - 1, 0)] if i > 0 else ys[0] / 2
    b = ys[min(i + 1, grid - 1)]
    _, best = golden_max(lambda y: -cramer_rate(spec, y) / y, a, b, tol=1e-12)
    return min(-best, float(vals[i]))


# -- Laplace transforms and quenched rate -------------------------------------------

@njit(cache=True)
def _laplace_logs(omega, factor, burn):
    # phi_i = omega_i f / (1 - (1 - omega_i) f phi_{i-1}); returns log phi for i >= burn
    n = omega.shape[0] - burn
    out = np.empty(n)
    phi = omega[0] * factor
    for i in range(1, omega.shape[0]):
        den = 1.0 - (1.0 - omega[i]) * factor * phi
        if den <= 0.0:
            out[:] = np.inf
            return out
        phi = omega[i] * factor / den
        if i >= burn:
            out[i - burn] = math.log(phi)
    if burn == 0:
        out[0] = math.log(omega[0] * factor)
    return out


def _mean_log_transform(env: Environment, factor: float, n: int, burn_in: int) -> float:
    om = env.omega_array(-burn_in, n - 1)
    logs = _laplace_logs(om, factor, burn_in)
    return float(logs.mean())


def quenched_laplace(env: Environment, lam: float, n: int, burn_in: int = 1000) -> float:
    """``n^-1 log E_omega exp(-lam T_n)`` by the exact hitting-time recursion."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return _mean_log_transform(env, math.exp(-lam), n, burn_in)


def quenched_log_mgf(env: Environment, theta: float, n: int, burn_in: int = 1000) -> float:
    """``n^-1 log E_omega exp(theta T_n)`` for ``theta >= 0``; ``inf`` when not integrable."""
    if theta < 0:
        raise ValueError("theta must be nonnegative")
    return _mean_log_transform(env, math.exp(theta), n, burn_in)


def _critical_theta(env: Environment, n: int, burn_in: int, hi: float = 10.0) -> float:
    if math.isfinite(quenched_log_mgf(env, hi, n, burn_in)):
        return hi
    lo = 0.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if math.isfinite(quenched_log_mgf(env, mid, n, burn_in)):
            lo = mid
        else:
            hi = mid
    return lo


def quenched_rate_slowdown(env: Environment, w: float, n: int = 10**4, burn_in: int = 1000) -> float:
    """Quenched rate of ``X_n / n ~ w`` on the slowdown side ``0 < w <= v``.

    Legendre dual of the hitting-time generating function:
    ``I(w) = sup_{theta >= 0} (theta - w * n^-1 log E exp(theta T_n))``.
    Returns 0 for ``w`` at or above the speed.
    """
    if not 0.0 < w <= 1.0:
        raise ValueError("w must lie in (0, 1]")
    theta_c = _critical_theta(env, n, burn_in)

    def f(theta):
        g = quenched_log_mgf(env, theta, n, burn_in)
        return theta - w * g if math.isfinite(g) else -math.inf

    _, val = golden_max(f, 0.0, theta_c, tol=1e-9)
    return max(val, 0.0)


def relative_entropy(q, p) -> float:
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    keep = q > 0
    return float(np.sum(q[keep] * np.log(q[keep] / p[keep])))


def annealed_rate_upper(spec: EnvironmentSpec, w: float, tilts: Iterable[float], seed: int = 0,
                        n: int = 10**4, burn_in: int = 1000) -> RateFunctionSample:
    """Upper bound on the annealed rate at ``w`` over product tilts of a two-point law.

    Each tilt ``q`` (weight of the first atom) costs ``|w|`` times the per-site
    relative entropy (the walk only reads ``|w| n`` sites in ``n`` steps) plus
    the quenched slowdown rate of a ``q``-environment realized
    from the same seed. Tilts whose speed is below ``w`` are skipped: the
    slowdown dual does not bound the rate there. ``Q = P`` is always included.
    """
    if spec.kind != "finite_support" or len(spec.values) != 2:
        raise SpecError("annealed_rate_upper takes a two-point law")
    tilts = list(tilts)
    if not tilts:
        raise ValueError("empty tilt grid")
    p = np.asarray(spec.probs)
    grid = sorted(set(float(q) for q in tilts if 0.0 < q < 1.0) | {float(p[0])})
    best, best_q = math.inf, None
    for q in grid:
        qv = (q, 1.0 - q)
        tilted = spec if q == p[0] else EnvironmentSpec.finite_support(list(zip(spec.values, qv)))
        if classify(tilted) != "transient_right" or speed(tilted) < w:
            continue
        val = abs(w) * relative_entropy(qv, p) + quenched_rate_slowdown(Environment(tilted, seed), w, n, burn_in)
        if val < best:
            best, best_q = val, q
    return RateFunctionSample(w, best, "upper_bound", f"tilt={best_q}")


# -- traps and potential ------------------------------------------------------------

def potential(env: Environment, lo: int, hi: int) -> PotentialProfile:
    """``W`` on sites ``lo..hi`` (``lo <= 0 <= hi``), ``W(0) = 0``."""
    if not lo <= 0 <= hi:
        raise ValueError("the potential range must contain the origin")
    logrho = env.log_rho_array(lo + 1, hi) if hi > lo else np.empty(0)
    W = np.concatenate([[0.0], np.cumsum(logrho)])
    return PotentialProfile(lo, W - W[-lo])


def find_traps(env: Environment, k: int, y: float, lo: int, hi: int) -> np.ndarray:
    """Sites ``z`` in ``[lo, hi]`` whose next ``k`` sites average ``log rho >= y``."""
    if k < 1:
        raise ValueError("k must be positive")
    logrho = env.log_rho_array(lo + 1, hi + k)
    sums = np.convolve(logrho, np.ones(k), mode="valid")
    return np.arange(lo, hi + 1)[sums >= y * k]


@njit(cache=True)
def _valley_search(W, i0, depth):
    # Valleys (a, b, c): W[b] is the minimum on [a, c], the rims a and c are
    # running maxima seen from b and rise at least `depth` above W[b], and
    # neither slope holds a sub-valley of depth `depth` (a drop of `depth`
    # below the running maximum). Returns the shortest with a < i0 <= c.
    n = W.shape[0]
    best_a, best_b, best_c = -1, -1, -1
    best_len = n + 1
    for b in range(n):
        wb = W[b]
        c = -1
        mx = wb
        for x in range(b + 1, n):
            wx = W[x]
            if wx < wb or mx - wx >= depth:
                break
            if wx >= mx:
                mx = wx
                if x >= i0 and wx - wb >= depth:
                    c = x
                    break
        if c < 0:
            continue
        a = -1
        mx = wb
        for x in range(b - 1, -1, -1):
            wx = W[x]
            if wx < wb or mx - wx >= depth:
                break
            if wx >= mx:
                mx = wx
                if x < i0 and wx - wb >= depth:
                    a = x
                    break
        if a < 0:
            continue
        if c - a < best_len:
            best_len = c - a
            best_a, best_b, best_c = a, b, c
    return best_a, best_b, best_c


def valley_of_potential(profile: PotentialProfile, depth: float) -> tuple[int, int, int] | None:
    """Smallest valley of the given depth around the origin, as sites (left, bottom, right)."""
    a, b, c = _valley_search(profile.W, -profile.lo, depth)
    if b < 0:
        return None
    return a + profile.lo, b + profile.lo, c + profile.lo


def sinai_valley(env: Environment, n: int, half_width: int | None = None,
                 max_half_width: int = 1 << 22) -> SinaiValley:
    """Bottom of the smallest valley of depth ``log n`` around the origin.

    The walk at time ``n`` concentrates within ``o((log n)^2)`` of this bottom.
    """
    if env.spec.kind not in ("table", "lattice_product") and classify(env.spec) != "recurrent":
        raise SpecError("sinai_valley needs a recurrent law (E log rho = 0)")
    depth = math.log(n)
    if half_width is None:
        _, w = env.spec.site_law()
        om = np.asarray(env.spec.values)
        sd = math.sqrt(max(float(w @ np.log((1 - om) / om) ** 2), 1e-6))
        half_width = int(max(256, 16 * (depth / sd) ** 2))
    while True:
        prof = potential(env, -half_width, half_width)
        found = valley_of_potential(prof, depth)
        if found is not None:
            a, b, c = found
            return SinaiValley(a, c, b, n)
        if half_width >= max_half_width:
            raise RuntimeError("no valley found within the maximal search window")
        half_width *= 2


# -- quenched law at large times ----------------------------------------------------

def _barrier_window(env: Environment, start: int, height: float, reach: int,
                    max_width: int, step: int = 512) -> tuple[int, int]:
    """Sites (lo, hi) around ``start`` where the potential rises ``height`` above
    every point between ``start`` and the boundary. A side with no such rise
    within ``reach`` sites is cut at ``start -/+ reach`` (unreachable beyond)."""
    half = min(step, reach)
    while True:
        lo, hi = start - half, start + half
        prof = potential(env, min(lo, 0), max(hi, 0))
        W = prof.W[lo - prof.lo:hi - prof.lo + 1]
        i0 = start - lo
        right = W[i0:]
        rise_r = right - np.minimum.accumulate(right)
        left = W[:i0 + 1][::-1]
        rise_l = left - np.minimum.accumulate(left)
        hit_r = np.nonzero(rise_r >= height)[0]
        hit_l = np.nonzero(rise_l >= height)[0]
        full = half >= reach
        if (hit_r.size or full) and (hit_l.size or full):
            a = start - int(hit_l[0]) - 1 if hit_l.size else start - reach
            b = start + int(hit_r[0]) + 1 if hit_r.size else start + reach
            return a, b
        if 2 * half + 1 > max_width:
            raise ValueError(f"no confining window within {max_width} sites; simulate instead")
        half = min(2 * half, reach)


@njit(cache=True)
def _evolve(p, om, t):
    # t steps of the walk on a finite segment; om[0] = 1 and om[-1] = 0 reflect
    w = p.shape[0]
    q = np.empty(w)
    for _ in range(t):
        q[:] = 0.0
        for x in range(w):
            m = p[x]
            if m != 0.0:
                if x + 1 < w:
                    q[x + 1] += m * om[x]
                if x > 0:
                    q[x - 1] += m * (1.0 - om[x])
        p, q = q, p
    return p


def _dense_power_row(om: np.ndarray, i0: int, t: int) -> np.ndarray:
    # row i0 of P^t by repeated squaring; entries stay nonnegative, so no cancellation
    w = om.shape[0]
    mat = np.zeros((w, w))
    idx = np.arange(w)
    mat[idx[:-1], idx[:-1] + 1] = om[:-1]
    mat[idx[1:], idx[1:] - 1] = 1.0 - om[1:]
    row = np.zeros(w)
    row[i0] = 1.0
    while t:
        if t & 1:
            row = row @ mat
        t >>= 1
        if t:
            mat = mat @ mat
    return row


def quenched_distribution(env: Environment, start: int, t: int, margin: float = 12.0,
                          direct_limit: float = 5e7, max_width: int = 200_000,
                          check: tuple[int, int] | None = None,
                          check_tol: float = 1e-9) -> tuple[int, np.ndarray]:
    """Law of ``X_t`` under ``P_omega^start`` as ``(lo, probs)`` over sites ``lo, lo+1, ...``.

    The walk is confined to a window whose rims sit ``log t + margin`` above
    every point between them and the start (escape probability of order
    ``exp(-margin)``); the window's ends reflect. Small ``t * width`` is
    iterated directly. Otherwise the reversible chain is diagonalized on the
    eigenvalues with ``lambda^t`` above ``exp(-50)``; the symmetrization
    amplifies rounding by ``sqrt(pi(y) / pi(start))``, so when that bound
    exceeds ``check_tol`` on the sites ``check`` (default: whole window) the
    row is recomputed by repeated squaring.
    """
    lo, hi = _barrier_window(env, start, math.log(max(t, 2)) + margin, t + 1, max_width)
    om = env.omega_array(lo, hi).copy()
    om[0], om[-1] = 1.0, 0.0
    width = hi - lo + 1
    i0 = start - lo
    if t * width <= direct_limit:
        p = np.zeros(width)
        p[i0] = 1.0
        return lo, _evolve(p, om, t)
    off = np.sqrt(om[:-1] * (1.0 - om[1:]))
    log_pi = np.concatenate([[0.0], np.cumsum(np.log(om[:-1]) - np.log1p(-om[1:]))])
    ca, cb = (0, width) if check is None else (max(check[0] - lo, 0), min(check[1] - lo + 1, width))
    log_amp = 0.5 * (log_pi[ca:cb].max() - log_pi[i0])
    if math.log(1e-15 * math.sqrt(width)) + log_amp > math.log(check_tol):
        if width > 4000:
            raise ValueError("spectral route is ill-conditioned and the window is too wide to square")
        return lo, _dense_power_row(om, i0, t)
    delta = min(1.0, 50.0 / t)
    vals, vecs = eigh_tridiagonal(np.zeros(width), off, select="v",
                                  select_range=(1.0 - delta, 2.0))
    vals = np.minimum(vals, 1.0)
    weights = np.exp(t * np.log(vals)) * vecs[i0, :]
    amp = vecs @ weights
    parity = (np.arange(width) - i0 + t) % 2 == 0
    with np.errstate(divide="ignore", over="ignore"):
        logp = np.log(np.clip(2.0 * amp, 0.0, None)) + 0.5 * (log_pi - log_pi[i0])
        return lo, np.where(parity, np.minimum(np.exp(logp), 1.0), 0.0)


def quenched_ball_probability(env: Environment, start: int, t: int, radius: float) -> float:
    """``P_omega^start(|X_t - start| < radius)``."""
    r = math.ceil(radius) - 1
    lo, p = quenched_distribution(env, start, t, check=(start - r, start + r))
    a = max(start - r - lo, 0)
    b = min(start + r - lo + 1, len(p))
    return float(min(max(p[a:b].sum(), 0.0), 1.0))


# -- tabulated output -----------------------------------------------------------------

@dataclass(frozen=True)
class ExactRow:
    operation: str
    spec_id: str
    parameters: dict = field(default_factory=dict)
    value: float = math.nan
    error: str = ""          # empty, or the exception class and message


def _op_exit(spec, p):
    env = Environment(spec, int(p.get("env_seed", 0)))
    return exit_probability(env, Window(int(p["m_minus"]), int(p["m_plus"]), int(p.get("z", 0))),
                            p.get("side", "left"))


def _op_tau(spec, p):
    return expected_tau(Environment(spec, int(p.get("env_seed", 0))), int(p.get("site", 0)))


def _op_quenched_rate(spec, p):
    env = Environment(spec, int(p.get("env_seed", 0)))
    return quenched_rate_slowdown(env, float(p["w"]), int(p.get("n", 10**4)))


def _op_annealed_rate(spec, p):
    tilts = np.linspace(float(p.get("tilt_lo", 0.3)), float(p.get("tilt_hi", 0.7)), int(p.get("tilts", 41)))
    return annealed_rate_upper(spec, float(p["w"]), tilts, int(p.get("env_seed", 0)),
                               int(p.get("n", 10**4))).value


OPERATIONS = {
    "speed": lambda spec, p: speed(spec) if spec.kind in ("constant", "finite_support") else speed_ergodic(spec),
    "s_parameter": lambda spec, p: s_parameter(spec),
    "s_from_rate": lambda spec, p: s_from_rate(spec),
    "cramer_rate": lambda spec, p: cramer_rate(spec, float(p["y"])),
    "exit_probability": _op_exit,
    "expected_tau": _op_tau,
    "quenched_rate_slowdown": _op_quenched_rate,
    "annealed_rate_upper": _op_annealed_rate,
}


def evaluate(operation: str, spec: EnvironmentSpec, **params) -> ExactRow:
    """Run one exact operation; failures are recorded in the row, not raised.

    Unknown operations and missing parameters still raise.
    """
    if operation not in OPERATIONS:
        raise KeyError(f"unknown exact operation {operation!r}; known: {', '.join(OPERATIONS)}")
    try:
        value = float(OPERATIONS[operation](spec, params))
        return ExactRow(operation, spec.label, dict(params), value)
    except KeyError:
        raise
    except (UndeterminedError, SpecError, ValueError, ArithmeticError) as exc:
        return ExactRow(operation, spec.label, dict(params), math.nan, f"{type(exc).__name__}: {exc}")


def export_rows_csv(rows: Iterable[ExactRow], path):
    """One line per row: operation, spec id, parameters (``k=v;...``), value, error flag."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["operation", "spec_id", "parameters", "value", "error"])
        for r in rows:
            params = ";".join(f"{k}={r.parameters[k]}" for k in sorted(r.parameters))
            w.writerow([r.operation, r.spec_id, params, repr(r.value), r.error])
