"""Environment laws and their realizations.

An :class:`EnvironmentSpec` is the law P of the environment; an
:class:`Environment` is one realization, i.e. a pure map ``site -> transition
probabilities`` keyed by a seed. Nothing is stored per site: values are
recomputed from a counter-based hash on every lookup.

Convention: in one dimension ``omega_x`` is the probability of a jump to the
right and ``rho_x = (1 - omega_x) / omega_x``. With this choice ``E log rho < 0``
means transience to the right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from numba import njit
from scipy.optimize import linprog
from scipy.sparse.csgraph import connected_components

from rwre._hashing import (STREAM_MARKOV0, STREAM_MARKOV_NEG, STREAM_MARKOV_POS,
                           as_seed, derive_seed, site_uniform, site_uniform1,
                           uniform1)

KINDS = ("constant", "finite_support", "periodic", "markov", "lattice_product", "table")
PROB_TOL = 1e-12


class SpecError(ValueError):
    """Invalid environment law."""


class NonEllipticError(SpecError):
    """Some transition probability in the law's support is zero."""


@dataclass(frozen=True)
class EnvironmentSpec:
    """Law of a random environment.

    ``values`` holds the omega values (1D kinds) or the transition vectors of
    length ``2 * dimension`` ordered ``(+e1, -e1, +e2, -e2, ...)``
    (``lattice_product``). ``probs`` are the atom weights of the site marginal
    for ``finite_support`` and ``lattice_product``; ``transition`` is the
    Markov matrix for ``markov``. ``table`` is a finite explicit environment
    whose first entry sits at site ``origin``. ``require_elliptic=False``
    admits zero entries (used for the residual law of the product walk).
    """

    kind: str
    values: tuple
    probs: tuple | None = None
    transition: tuple | None = None
    dimension: int = 1
    ellipticity_bound: float | None = None
    origin: int = 0
    name: str = ""
    require_elliptic: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown environment kind {self.kind!r}")
        if not self.values:
            raise SpecError("empty support")
        if self.kind == "lattice_product":
            if self.dimension < 1:
                raise SpecError("dimension must be positive")
            for vec in self.values:
                if len(vec) != 2 * self.dimension:
                    raise SpecError(f"transition vector {vec} does not have {2 * self.dimension} entries")
                if abs(math.fsum(vec) - 1.0) > PROB_TOL:
                    raise SpecError(f"transition vector {vec} does not sum to 1")
        elif self.dimension != 1:
            raise SpecError(f"{self.kind} environments are one-dimensional")
        if self.kind in ("finite_support", "lattice_product"):
            if self.probs is None or len(self.probs) != len(self.values):
                raise SpecError("support and weights differ in length")
            if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > PROB_TOL:
                raise SpecError("support weights must be nonnegative and sum to 1")
        if self.kind == "constant" and len(self.values) != 1:
            raise SpecError("constant law takes one value")
        if self.kind == "markov":
            k = len(self.values)
            mat = np.asarray(self.transition, dtype=float)
            if mat.shape != (k, k):
                raise SpecError("Markov matrix must be square with one row per state")
            if (mat < 0).any() or np.abs(mat.sum(axis=1) - 1.0).max() > PROB_TOL:
                raise SpecError("Markov matrix rows must be probability vectors")
            n_comp, _ = connected_components(mat > 0, directed=True, connection="strong")
            if n_comp != 1:
                raise SpecError("Markov chain is not irreducible")
        if not self.require_elliptic:
            return
        eps = ellipticity_check(self)
        if self.ellipticity_bound is not None:
            if self.ellipticity_bound <= 0:
                raise SpecError("ellipticity bound must be positive")
            if eps < self.ellipticity_bound - PROB_TOL:
                raise NonEllipticError(
                    f"law has a transition probability {eps} below the bound {self.ellipticity_bound}")

    # -- constructors ---------------------------------------------------
    @classmethod
    def constant(cls, omega: float, **kw) -> "EnvironmentSpec":
        return cls("constant", (float(omega),), **kw)

    @classmethod
    def finite_support(cls, atoms: Mapping[float, float] | Sequence[tuple[float, float]], **kw):
        pairs = list(atoms.items()) if isinstance(atoms, Mapping) else list(atoms)
        return cls("finite_support", tuple(float(v) for v, _ in pairs),
                   tuple(float(p) for _, p in pairs), **kw)

    @classmethod
    def periodic(cls, omegas: Sequence[float], **kw):
        return cls("periodic", tuple(float(v) for v in omegas), **kw)

    @classmethod
    def markov(cls, omegas: Sequence[float], transition, **kw):
        mat = tuple(tuple(float(x) for x in row) for row in transition)
        return cls("markov", tuple(float(v) for v in omegas), transition=mat, **kw)

    @classmethod
    def lattice_product(cls, dimension: int, atoms: Sequence[tuple[Sequence[float], float]], **kw):
        return cls("lattice_product", tuple(tuple(float(x) for x in v) for v, _ in atoms),
                   tuple(float(p) for _, p in atoms), dimension=int(dimension), **kw)

    @classmethod
    def table(cls, omegas: Sequence[float], origin: int = 0, **kw):
        """Explicit finite environment; lookups outside the table are errors."""
        return cls("table", tuple(float(v) for v in omegas), origin=int(origin), **kw)

    # -- derived quantities -------------------------------------------
    @property
    def is_product(self) -> bool:
        return self.kind in ("constant", "finite_support", "lattice_product")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "constant":
            return f"constant({self.values[0]:g})"
        if self.kind == "finite_support":
            return "{" + ",".join(f"{v:g}:{p:g}" for v, p in zip(self.values, self.probs)) + "}"
        if self.kind == "periodic":
            return "periodic[" + ",".join(f"{v:g}" for v in self.values) + "]"
        return f"{self.kind}(d={self.dimension},k={len(self.values)})"

    def site_law(self) -> tuple[np.ndarray, np.ndarray]:
        """Support and weights of the one-site marginal (stationary for Markov/periodic)."""
        vals = np.asarray(self.values, dtype=float)
        if self.kind == "constant":
            return vals, np.ones(1)
        if self.kind in ("finite_support", "lattice_product"):
            return vals, np.asarray(self.probs, dtype=float)
        if self.kind in ("periodic", "table"):
            return vals, np.full(len(vals), 1.0 / len(vals))
        return vals, stationary_distribution(np.asarray(self.transition, dtype=float))

    def reversed_transition(self) -> np.ndarray:
        """Transition matrix of the stationary Markov chain read right-to-left."""
        mat = np.asarray(self.transition, dtype=float)
        pi = stationary_distribution(mat)
        return (mat.T * pi[None, :]) / pi[:, None]


def stationary_distribution(mat: np.ndarray) -> np.ndarray:
    k = mat.shape[0]
    a = np.vstack([mat.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def ellipticity_check(spec: EnvironmentSpec) -> float:
    """Largest epsilon with every transition probability >= epsilon.

    Raises :class:`NonEllipticError` when some probability in the support is 0.
    """
    if spec.kind == "lattice_product":
        eps = min(min(vec) for vec in spec.values)
    else:
        eps = min(min(v, 1.0 - v) for v in spec.values)
    if eps <= 0.0:
        raise NonEllipticError(f"{spec.kind} law is not elliptic (minimal transition {eps})")
    return eps


# -- moments of rho -------------------------------------------------------

def _rho_law(spec: EnvironmentSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.kind == "lattice_product":
        raise SpecError("rho moments are one-dimensional quantities")
    omega, w = spec.site_law()
    return (1.0 - omega) / omega, w


def moments(spec: EnvironmentSpec, lam: float) -> float:
    """``E_P(rho_0 ** lam)`` under the site marginal (stationary law for Markov)."""
    rho, w = _rho_law(spec)
    if lam == 0:
        return 1.0
    return float(np.dot(w, np.exp(lam * np.log(rho))))


def log_moment(spec: EnvironmentSpec, lam: float) -> float:
    """``log E_P(rho_0 ** lam)``, stable for large ``|lam|``."""
    rho, w = _rho_law(spec)
    logs = np.log(rho)
    keep = w > 0
    z = lam * logs[keep] + np.log(w[keep])
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()))


def mean_log_rho(spec: EnvironmentSpec) -> float:
    """``u = E_P log rho_0``."""
    rho, w = _rho_law(spec)
    return float(math.fsum(w * np.log(rho)))


def drift_support(spec: EnvironmentSpec) -> np.ndarray:
    """Local drifts ``sum_e e * omega(0, e)`` over the support, shape (k, d)."""
    if spec.kind == "lattice_product":
        vecs = np.asarray(spec.values, dtype=float)
        return vecs[:, 0::2] - vecs[:, 1::2]
    omega = np.asarray(spec.values, dtype=float)
    if spec.kind in ("finite_support",):
        omega = omega[np.asarray(spec.probs) > 0]
    return (2.0 * omega - 1.0)[:, None]


def is_nestling(spec: EnvironmentSpec, tol: float = 1e-12) -> bool:
    """True iff the zero drift lies in the convex hull of the drift support."""
    pts = drift_support(spec)
    if np.all(np.abs(pts).max(axis=1) <= tol):
        return True
    k, d = pts.shape
    # feasibility of  sum_i w_i pts_i = 0,  sum w = 1,  w >= 0
    a_eq = np.vstack([pts.T, np.ones(k)])
    b_eq = np.zeros(d + 1)
    b_eq[-1] = 1.0
    res = linprog(np.zeros(k), A_eq=a_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    if res.status != 0:
        return False
    return bool(np.abs(pts.T @ res.x).max() <= 1e-9)


# -- realization ------------------------------------------------------------

@njit(cache=True)
def _iid_select1(seed, lo, hi, cum, out):
    last = cum.shape[0] - 1
    for x in range(lo, hi + 1):
        u = site_uniform1(seed, x)
        i = 0
        while i < last and u >= cum[i]:
            i += 1
        out[x - lo] = i


@njit(cache=True)
def _markov_states(seed, seed_neg, pi_cum, fwd_cum, bwd_cum, lo, hi, out):
    # states for sites lo..hi; chain started at site 0 from its stationary law
    k = pi_cum.shape[0]
    u = uniform1(seed, STREAM_MARKOV0, 0)
    s0 = 0
    while s0 < k - 1 and u >= pi_cum[s0]:
        s0 += 1
    s = s0
    if lo <= 0 <= hi:
        out[-lo] = s0
    for x in range(1, hi + 1):
        u = uniform1(seed, STREAM_MARKOV_POS, x)
        j = 0
        while j < k - 1 and u >= fwd_cum[s, j]:
            j += 1
        s = j
        if x >= lo:
            out[x - lo] = s
    s = s0
    for x in range(1, -lo + 1):
        u = uniform1(seed_neg, STREAM_MARKOV_NEG, x)
        j = 0
        while j < k - 1 and u >= bwd_cum[s, j]:
            j += 1
        s = j
        if -x <= hi:
            out[-x - lo] = s


@njit(cache=True)
def _lattice_select(seed, coords, cum):
    u = site_uniform(seed, coords)
    last = cum.shape[0] - 1
    i = 0
    while i < last and u >= cum[i]:
        i += 1
    return i


def _cum(weights) -> np.ndarray:
    c = np.cumsum(np.asarray(weights, dtype=float))
    c[-1] = 1.0
    return c


@dataclass(frozen=True)
class Environment:
    """One realization of ``spec`` keyed by ``seed``.

    Immutable: lookups recompute from the hash, so concurrent readers never
    contend and two environments with equal ``(spec, seed)`` agree everywhere.
    """

    spec: EnvironmentSpec
    seed: int = 0
    _seed64: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_seed64", as_seed(self.seed))

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    # -- 1D access ----------------------------------------------------------
    def omega_array(self, lo: int, hi: int) -> np.ndarray:
        """Right-jump probabilities at sites ``lo..hi`` (inclusive)."""
        spec = self.spec
        if spec.kind == "lattice_product":
            raise SpecError("omega_array is for one-dimensional environments")
        lo, hi = int(lo), int(hi)
        n = hi - lo + 1
        vals = np.asarray(spec.values, dtype=float)
        if spec.kind == "constant":
            return np.full(n, vals[0])
        if spec.kind == "periodic":
            return vals[np.arange(lo, hi + 1) % len(vals)]
        if spec.kind == "table":
            i0 = lo - spec.origin
            if i0 < 0 or i0 + n > len(vals):
                raise IndexError(f"sites [{lo}, {hi}] fall outside the tabulated environment")
            return vals[i0:i0 + n].copy()
        idx = np.empty(n, dtype=np.int64)
        if spec.kind == "finite_support":
            _iid_select1(self._seed64, lo, hi, _cum(spec.probs), idx)
        else:
            self._markov_fill(lo, hi, idx)
        return vals[idx]

    def _markov_fill(self, lo, hi, out):
        spec = self.spec
        mat = np.asarray(spec.transition, dtype=float)
        pi = stationary_distribution(mat)
        fwd = np.cumsum(mat, axis=1)
        bwd = np.cumsum(spec.reversed_transition(), axis=1)
        fwd[:, -1] = 1.0
        bwd[:, -1] = 1.0
        seed_neg = derive_seed(self._seed64, STREAM_MARKOV_NEG, 0)
        _markov_states(self._seed64, seed_neg, _cum(pi), fwd, bwd, lo, hi, out)

    def rho_array(self, lo: int, hi: int) -> np.ndarray:
        om = self.omega_array(lo, hi)
        return (1.0 - om) / om

    def log_rho_array(self, lo: int, hi: int) -> np.ndarray:
        om = self.omega_array(lo, hi)
        return np.log1p(-om) - np.log(om)

    # -- general access --------------------------------------------------------
    def omega_at(self, site) -> float | np.ndarray:
        """Transition probabilities at ``site``.

        One-dimensional environments return the right-jump probability as a
        float; lattice environments return the vector over
        ``(+e1, -e1, +e2, -e2, ...)``.
        """
        if self.spec.kind != "lattice_product":
            x = int(site if np.ndim(site) == 0 else np.asarray(site).reshape(-1)[0])
            return float(self.omega_array(x, x)[0])
        coords = np.asarray(site, dtype=np.int64).reshape(-1)
        if coords.shape[0] != self.dimension:
            raise ValueError(f"site {site} is not a point of Z^{self.dimension}")
        i = _lattice_select(self._seed64, coords, _cum(self.spec.probs))
        return np.asarray(self.spec.values[i], dtype=float)

    def kernel_args(self, lo: int = 0, hi: int = -1):
        """``(iid, vals, cum, table, offset, period, seed)`` for the 1D walk kernels.

        Markov environments are materialized on ``[lo, hi]``; walks that could
        leave that range are refused by the kernels.
        """
        spec = self.spec
        vals = np.asarray(spec.values, dtype=float)
        empty = np.empty(0)
        if spec.kind in ("constant", "finite_support"):
            probs = (1.0,) if spec.kind == "constant" else spec.probs
            return True, vals, _cum(probs), empty, 0, 0, self._seed64
        if spec.kind == "periodic":
            return False, empty, empty, vals, 0, len(vals), self._seed64
        if spec.kind == "table":
            return False, empty, empty, vals, spec.origin, 0, self._seed64
        if spec.kind == "markov":
            return False, empty, empty, self.omega_array(lo, hi), lo, 0, self._seed64
        raise SpecError("kernel_args is for one-dimensional environments")

    def lattice_args(self):
        spec = self.spec
        if spec.kind != "lattice_product":
            raise SpecError("lattice_args needs a lattice_product environment")
        return np.asarray(spec.values, dtype=float), _cum(spec.probs), self._seed64


def reflect(env: Environment, lo: int, hi: int) -> Environment:
    """Mirror image ``omega'_x = 1 - omega_{-x}`` of ``env`` on ``[-hi, -lo]``, tabulated."""
    om = env.omega_array(lo, hi)
    return Environment(EnvironmentSpec.table(1.0 - om[::-1], origin=-hi))


# -- config parsing ------------------------------------------------------------

def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _atoms(text: str) -> list[tuple[list[float], float]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" not in item:
            raise SpecError(f"support atom {item!r} is not of the form value:probability")
        v, p = item.rsplit(":", 1)
        out.append(([float(t) for t in v.split()], float(p)))
    return out


def spec_from_config(section: Mapping[str, str]) -> EnvironmentSpec:
    """Build a spec from ``key = value`` entries.

    ``kind`` is required. Supports are comma-separated ``value:probability``
    pairs; lattice atoms write the vector space-separated before the colon.
    Markov matrices separate rows with ``;``.
    """
    if "kind" not in section:
        raise KeyError("kind")
    kind = section["kind"].strip()
    eps = float(section["epsilon"]) if "epsilon" in section else None
    name = section.get("name", "")
    if kind == "constant":
        return EnvironmentSpec.constant(float(section["omega"]), ellipticity_bound=eps, name=name)
    if kind == "finite_support":
        atoms = [(v[0], p) for v, p in _atoms(section["support"])]
        return EnvironmentSpec.finite_support(atoms, ellipticity_bound=eps, name=name)
    if kind == "periodic":
        return EnvironmentSpec.periodic(_floats(section["values"]), ellipticity_bound=eps, name=name)
    if kind == "markov":
        rows = [_floats(r) for r in section["matrix"].split(";") if r.strip()]
        return EnvironmentSpec.markov(_floats(section["omegas"]), rows, ellipticity_bound=eps, name=name)
    if kind == "lattice_product":
        return EnvironmentSpec.lattice_product(int(section["dimension"]), _atoms(section["support"]),
                                               ellipticity_bound=eps, name=name)
    raise SpecError(f"unknown environment kind {kind!r}")
