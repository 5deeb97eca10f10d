"""Independent reference computations used by the tests.

Each oracle takes a different route from the package code: dense linear
algebra instead of closed forms, brute-force definitions instead of
vectorized scans, scipy root finders instead of bisection.
"""

import math

import numpy as np
from scipy import optimize


def exit_left_dense(omegas, z_index):
    """Absorbing-chain probability of hitting the left end first.

    ``omegas`` are the right-jump probabilities on the interior sites; the
    two ends are absorbing. Solved as a dense linear system.
    """
    om = np.asarray(omegas, dtype=float)
    k = len(om)
    a = np.eye(k)
    b = np.zeros(k)
    for i in range(k):
        if i + 1 < k:
            a[i, i + 1] -= om[i]
        if i - 1 >= 0:
            a[i, i - 1] -= 1 - om[i]
        else:
            b[i] += 1 - om[i]
    return float(np.linalg.solve(a, b)[z_index])


def periodic_tau_by_substitution(omegas):
    """``E tau_x`` (time from ``x`` to ``x+1``) for a periodic environment.

    Uses ``t_x = (1 + (1 - w_x) t_{x-1}) / w_x`` iterated around one period,
    which is affine in ``t_{-1}``; the fixed point closes the cycle.
    """
    om = list(map(float, omegas))
    p = len(om)

    def around(t_prev):
        out = []
        for x in range(p):
            t_prev = (1 + (1 - om[x]) * t_prev) / om[x]
            out.append(t_prev)
        return out

    a0 = around(0.0)[-1]
    a1 = around(1.0)[-1]
    slope = a1 - a0
    if slope >= 1:
        return [math.inf] * p
    fixed = a0 / (1 - slope)
    return around(fixed)


def iid_speed(values, probs):
    """``(1 - E rho) / (1 + E rho)`` for an i.i.d. law, 0 when ``E rho >= 1`` and ``E 1/rho >= 1``."""
    om = np.asarray(values, dtype=float)
    w = np.asarray(probs, dtype=float)
    rho = (1 - om) / om
    erho = float(w @ rho)
    einv = float(w @ (1 / rho))
    if erho < 1:
        return (1 - erho) / (1 + erho)
    if einv < 1:
        return -(1 - einv) / (1 + einv)
    return 0.0


def s_root(values, probs):
    om = np.asarray(values, dtype=float)
    w = np.asarray(probs, dtype=float)
    lr = np.log((1 - om) / om)

    def f(s):
        return math.log(float(w @ np.exp(s * lr)))

    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    return optimize.brentq(f, 1e-9, hi, xtol=1e-14)


def cramer_by_minimize(values, probs, y):
    """``sup_l (l y - log E rho^l)`` with scipy's bounded scalar minimizer."""
    om = np.asarray(values, dtype=float)
    w = np.asarray(probs, dtype=float)
    lr = np.log((1 - om) / om)

    def neg(lam):
        z = lam * lr + np.log(w)
        m = z.max()
        return -(lam * y - (m + math.log(np.exp(z - m).sum())))

    best = optimize.minimize_scalar(neg, bounds=(-200, 200), method="bounded",
                                    options={"xatol": 1e-12})
    return -best.fun


def bernoulli_cramer(p, w):
    """Rate of ``S_n / n -> w`` for i.i.d. steps ``+1`` w.p. ``p`` and ``-1`` otherwise."""
    q = 1 - p
    a, b = (1 + w) / 2, (1 - w) / 2
    return a * math.log(a / p) + b * math.log(b / q)


def constant_laplace(p, lam):
    """``log E exp(-lam tau_1)`` for the homogeneous walk, from the quadratic for the generating function."""
    q = 1 - p
    f = math.exp(-lam)
    phi = (1 - math.sqrt(1 - 4 * p * q * f * f)) / (2 * q * f)
    return math.log(phi)


def brute_regeneration(Z):
    """Times ``t`` with ``Z_t`` a strict record and ``Z_n >= Z_t`` afterwards, by the definition."""
    Z = list(Z)
    out = []
    for t in range(len(Z)):
        if all(Z[n] < Z[t] for n in range(t)) and all(Z[n] >= Z[t] for n in range(t + 1, len(Z))):
            out.append(t)
    return out


def brute_cuts(R, margin):
    """Cut times in ``[M, H - M]`` by direct set intersection."""
    R = [tuple(np.atleast_1d(r)) for r in R]
    H = len(R) - 1
    out = []
    for t in range(margin, H - margin + 1):
        past = set(R[max(t - margin, 0):t])
        future = set(R[t:t + margin + 1])
        if not past & future:
            out.append(t)
    return out


def exact_walk_law(omegas, lo, start, t):
    """Law of ``X_t`` by dense matrix powers on a window wide enough to be exact."""
    om = np.asarray(omegas, dtype=float)
    n = len(om)
    P = np.zeros((n, n))
    for i in range(n):
        if i + 1 < n:
            P[i, i + 1] = om[i]
        if i - 1 >= 0:
            P[i, i - 1] = 1 - om[i]
    v = np.zeros(n)
    v[start - lo] = 1.0
    for _ in range(t):
        v = v @ P
    return v
