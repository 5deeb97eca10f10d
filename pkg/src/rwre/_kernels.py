"""Compiled inner loops for the walk samplers.

1D environments reach the kernels as ``(iid, vals, cum, table, offset, period,
seed)``; see :meth:`rwre.env.Environment.kernel_args`. The site lookups are
kept tiny so LLVM inlines them; a larger lookup that is called out of line
pays array refcounting on every step (several times slower).

Lattice environments are passed as ``(vecs, cum, seed)``. Direction index
``j`` means coordinate ``j // 2`` with sign ``+`` for even ``j``.
"""

import numpy as np
from numba import njit

from rwre._hashing import (STREAM_BERNOULLI, STREAM_COIN, STREAM_ENV_SPLIT,
                           STREAM_RESID, STREAM_RSTEP, STREAM_STEP,
                           STREAM_WALK_SPLIT, _split, site_uniform,
                           site_uniform1, uniform1)


@njit(cache=True)
def om_iid(vals, cum, seed, x):
    last = cum.shape[0] - 1
    u = site_uniform1(seed, x)
    i = 0
    while i < last and u >= cum[i]:
        i += 1
    return vals[i]


@njit(cache=True)
def om_tab(table, offset, period, x):
    if period > 0:
        return table[x % period]
    return table[x - offset]


@njit(cache=True)
def _check_tab(table, offset, period, lo, hi):
    if period == 0 and (lo - offset < 0 or hi - offset >= table.shape[0]):
        raise IndexError("walk can leave the tabulated environment")


@njit(cache=True)
def walk1d(iid, vals, cum, table, offset, period, env_seed, walk_seed, start, n, out):
    if not iid:
        _check_tab(table, offset, period, start - n, start + n)
    x = start
    out[0] = x
    for i in range(n):
        if iid:
            om = om_iid(vals, cum, env_seed, x)
        else:
            om = om_tab(table, offset, period, x)
        if uniform1(walk_seed, STREAM_STEP, i) < om:
            x += 1
        else:
            x -= 1
        out[i + 1] = x


@njit(cache=True)
def quenched_endpoints1d(iid, vals, cum, table, offset, period, env_seed, master, start, n, out):
    if not iid:
        _check_tab(table, offset, period, start - n, start + n)
    for k in range(out.shape[0]):
        ws = _split(master, STREAM_WALK_SPLIT, k)
        x = start
        for i in range(n):
            if iid:
                om = om_iid(vals, cum, env_seed, x)
            else:
                om = om_tab(table, offset, period, x)
            if uniform1(ws, STREAM_STEP, i) < om:
                x += 1
            else:
                x -= 1
        out[k] = x


@njit(cache=True)
def annealed_endpoints1d(vals, cum, master, n, first, out):
    """X_n of annealed walkers ``first .. first + len(out) - 1`` in i.i.d. environments."""
    for k in range(out.shape[0]):
        es = _split(master, STREAM_ENV_SPLIT, first + k)
        ws = _split(master, STREAM_WALK_SPLIT, first + k)
        x = 0
        for i in range(n):
            if uniform1(ws, STREAM_STEP, i) < om_iid(vals, cum, es, x):
                x += 1
            else:
                x -= 1
        out[k] = x


@njit(cache=True)
def annealed_two_times1d(vals, cum, master, n1, n2, first, out1, out2):
    # positions at times n1 <= n2
    for k in range(out1.shape[0]):
        es = _split(master, STREAM_ENV_SPLIT, first + k)
        ws = _split(master, STREAM_WALK_SPLIT, first + k)
        x = 0
        for i in range(n2):
            if i == n1:
                out1[k] = x
            if uniform1(ws, STREAM_STEP, i) < om_iid(vals, cum, es, x):
                x += 1
            else:
                x -= 1
        if n1 == n2:
            out1[k] = x
        out2[k] = x


@njit(cache=True)
def annealed_passage1d(vals, cum, master, level, max_steps, first, out):
    """First time each annealed walker from 0 hits ``level`` (> 0); -1 if censored."""
    for k in range(out.shape[0]):
        es = _split(master, STREAM_ENV_SPLIT, first + k)
        ws = _split(master, STREAM_WALK_SPLIT, first + k)
        x = 0
        out[k] = -1
        for i in range(max_steps):
            if uniform1(ws, STREAM_STEP, i) < om_iid(vals, cum, es, x):
                x += 1
            else:
                x -= 1
            if x == level:
                out[k] = i + 1
                break


@njit(cache=True)
def quenched_passage1d(iid, vals, cum, table, offset, period, env_seed, master, start, level,
                       max_steps, out):
    if not iid:
        _check_tab(table, offset, period, start - max_steps, start + max_steps)
    for k in range(out.shape[0]):
        ws = _split(master, STREAM_WALK_SPLIT, k)
        x = start
        out[k] = -1
        for i in range(max_steps):
            if iid:
                om = om_iid(vals, cum, env_seed, x)
            else:
                om = om_tab(table, offset, period, x)
            if uniform1(ws, STREAM_STEP, i) < om:
                x += 1
            else:
                x -= 1
            if x == level:
                out[k] = i + 1
                break


@njit(cache=True)
def exit_left_count1d(iid, vals, cum, table, offset, period, env_seed, master, left, right, z,
                      n_trials):
    if not iid:
        _check_tab(table, offset, period, left, right)
    hits = 0
    for k in range(n_trials):
        ws = _split(master, STREAM_WALK_SPLIT, k)
        x = z
        i = 0
        while left < x < right:
            if iid:
                om = om_iid(vals, cum, env_seed, x)
            else:
                om = om_tab(table, offset, period, x)
            if uniform1(ws, STREAM_STEP, i) < om:
                x += 1
            else:
                x -= 1
            i += 1
        if x == left:
            hits += 1
    return hits


# -- coupled walks ---------------------------------------------------------

@njit(cache=True)
def coupled_move(p_right, eps, u_coin, u_move):
    """1D coupled kernel; returns (step, coin) with coin in {0, +1, -1}."""
    if u_coin < eps:
        if u_coin < 0.5 * eps:
            return 1, 1
        return -1, -1
    if u_move < (p_right - 0.5 * eps) / (1.0 - eps):
        return 1, 0
    return -1, 0


@njit(cache=True)
def coupled1d(iid, vals, cum, table, offset, period, env_seed, walk_seed, eps, start, n, out, coins):
    if not iid:
        _check_tab(table, offset, period, start - n, start + n)
    x = start
    out[0] = x
    for i in range(n):
        if iid:
            om = om_iid(vals, cum, env_seed, x)
        else:
            om = om_tab(table, offset, period, x)
        s, c = coupled_move(om, eps, uniform1(walk_seed, STREAM_COIN, i),
                            uniform1(walk_seed, STREAM_STEP, i))
        x += s
        out[i + 1] = x
        coins[i] = c


@njit(cache=True)
def coupled_endpoints1d(iid, vals, cum, table, offset, period, env_seed, master, eps, start, n, out):
    if not iid:
        _check_tab(table, offset, period, start - n, start + n)
    for k in range(out.shape[0]):
        ws = _split(master, STREAM_WALK_SPLIT, k)
        x = start
        for i in range(n):
            if iid:
                om = om_iid(vals, cum, env_seed, x)
            else:
                om = om_tab(table, offset, period, x)
            s, c = coupled_move(om, eps, uniform1(ws, STREAM_COIN, i),
                                uniform1(ws, STREAM_STEP, i))
            x += s
        out[k] = x


# -- lattice walks ------------------------------------------------------------

@njit(cache=True)
def select_atom(seed, coords, cum):
    u = site_uniform(seed, coords)
    last = cum.shape[0] - 1
    i = 0
    while i < last and u >= cum[i]:
        i += 1
    return i


@njit(cache=True)
def pick_direction(vecs, a, u):
    acc = 0.0
    last = vecs.shape[1] - 1
    for j in range(last):
        acc += vecs[a, j]
        if u < acc:
            return j
    return last


@njit(cache=True)
def coupled_direction(vecs, a, eps, d, u_coin, u_move):
    # (direction, coin code); code 0 is the zero coin, j + 1 is direction j
    if u_coin < eps * d:
        j = int(u_coin / (0.5 * eps))
        if j > 2 * d - 1:
            j = 2 * d - 1
        return j, j + 1
    scale = 1.0 - d * eps
    acc = 0.0
    last = 2 * d - 1
    for j in range(last):
        acc += (vecs[a, j] - 0.5 * eps) / scale
        if u_move < acc:
            return j, 0
    return last, 0


@njit(cache=True)
def walkd(vecs, cum, env_seed, walk_seed, start, n, out):
    x = start.copy()
    out[0, :] = x
    for i in range(n):
        a = select_atom(env_seed, x, cum)
        j = pick_direction(vecs, a, uniform1(walk_seed, STREAM_STEP, i))
        if j % 2 == 0:
            x[j // 2] += 1
        else:
            x[j // 2] -= 1
        out[i + 1, :] = x


@njit(cache=True)
def coupledd(vecs, cum, env_seed, walk_seed, eps, start, n, out, coins):
    d = start.shape[0]
    x = start.copy()
    out[0, :] = x
    for i in range(n):
        a = select_atom(env_seed, x, cum)
        j, c = coupled_direction(vecs, a, eps, d, uniform1(walk_seed, STREAM_COIN, i),
                                 uniform1(walk_seed, STREAM_STEP, i))
        if j % 2 == 0:
            x[j // 2] += 1
        else:
            x[j // 2] -= 1
        out[i + 1, :] = x
        coins[i] = c


@njit(cache=True)
def endpointsd(vecs, cum, env_seed, master, eps, coupled, n, out):
    # out: (walkers, d); every walker starts at the origin
    d = out.shape[1]
    x = np.zeros(d, dtype=np.int64)
    for k in range(out.shape[0]):
        ws = _split(master, STREAM_WALK_SPLIT, k)
        x[:] = 0
        for i in range(n):
            a = select_atom(env_seed, x, cum)
            if coupled:
                j, c = coupled_direction(vecs, a, eps, d, uniform1(ws, STREAM_COIN, i),
                                         uniform1(ws, STREAM_STEP, i))
            else:
                j = pick_direction(vecs, a, uniform1(ws, STREAM_STEP, i))
            if j % 2 == 0:
                x[j // 2] += 1
            else:
                x[j // 2] -= 1
        out[k, :] = x


@njit(cache=True)
def product_walk(vecs, cum, env_seed, walk_seed, n, pos, ibits, rpath, upath):
    """Walk assembled from a q/S walk R in the first five coordinates, Bernoulli(S)
    clock bits I and residual moves drawn from the environment. Returns U_n."""
    d = pos.shape[1]
    s_tot = 0.0
    for j in range(10):
        s_tot += vecs[0, j]
    qn = vecs[0:1, :10] / s_tot
    resid_n = 2 * (d - 5)
    x = np.zeros(d, dtype=np.int64)
    pos[0, :] = x
    rpath[0, :] = 0
    upath[0] = 0
    u_count = 0
    for i in range(n):
        if uniform1(walk_seed, STREAM_BERNOULLI, i) < s_tot:
            ibits[i] = 1
            j = pick_direction(qn, 0, uniform1(walk_seed, STREAM_RSTEP, u_count))
            if j % 2 == 0:
                x[j // 2] += 1
            else:
                x[j // 2] -= 1
            u_count += 1
            for c in range(5):
                rpath[u_count, c] = x[c]
        else:
            ibits[i] = 0
            a = select_atom(env_seed, x, cum)
            u = uniform1(walk_seed, STREAM_RESID, i) * (1.0 - s_tot)
            acc = 0.0
            jj = resid_n - 1
            for j in range(resid_n):
                acc += vecs[a, 10 + j]
                if u < acc:
                    jj = j
                    break
            if jj % 2 == 0:
                x[5 + jj // 2] += 1
            else:
                x[5 + jj // 2] -= 1
        pos[i + 1, :] = x
        upath[i + 1] = u_count
    return u_count


@njit(cache=True)
def simple_walk_path(qn, walk_seed, n, out):
    """Walk in Z^k with direction probabilities ``qn`` (shape (1, 2k)); same stream as R above."""
    k = out.shape[1]
    r = np.zeros(k, dtype=np.int64)
    out[0, :] = r
    for i in range(n):
        j = pick_direction(qn, 0, uniform1(walk_seed, STREAM_RSTEP, i))
        if j % 2 == 0:
            r[j // 2] += 1
        else:
            r[j // 2] -= 1
        out[i + 1, :] = r
