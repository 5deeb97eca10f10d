"""Preset experiments: each one confronts an exact value or limit theorem with
desk-scale simulation and reports estimates against an acceptance bound.

A preset runner takes a :class:`RunContext` and returns ``(rows, plots)``.
Rows carry an estimate, its interval, the bound it is checked against and the
module that produced it. Plots are plain data; rendering lives in the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from rwre import exact1d, regen, stats
from rwre._hashing import derive_seed, walker_seeds
from rwre.env import Environment, EnvironmentSpec, SpecError, is_nestling
from rwre.estimate import EstimateWithCI, mean_ci, rng_for
from rwre.walk import (CouplingParams, annealed_passage_times, exit_left_frequency,
                       quenched_endpoints, quenched_passage_times, run_annealed, run_product_walk)

STREAM_PRESET = 20


@dataclass(frozen=True)
class Row:
    name: str
    value: float
    ci_low: float = math.nan
    ci_high: float = math.nan
    target: float = math.nan
    check: str = ""
    passed: bool | None = None     # None: reported, not checked
    module: str = ""
    seed: int = 0

    @classmethod
    def from_ci(cls, name, est: EstimateWithCI, **kw) -> "Row":
        return cls(name, est.point, est.ci_low, est.ci_high, **kw)


@dataclass(frozen=True)
class Plot:
    name: str
    title: str
    xlabel: str
    ylabel: str
    series: tuple            # ((label, x, y), ...)
    loglog: bool = False
    reference: tuple = ()    # ((label, x, y), ...) drawn dashed


@dataclass
class RunContext:
    seed: int
    params: dict
    laws: dict

    def sub_seed(self, index: int) -> int:
        return derive_seed(self.seed, STREAM_PRESET, index)


@dataclass(frozen=True)
class Preset:
    id: str
    description: str
    anchor: str
    budget_s: int
    params: dict
    laws: dict
    runner: Callable = field(repr=False)

    def context(self, seed: int, params: dict | None = None, laws: dict | None = None) -> RunContext:
        p = dict(self.params)
        for k, v in (params or {}).items():
            if k not in p:
                raise KeyError(f"preset {self.id!r} has no parameter {k!r}")
            p[k] = coerce_like(p[k], v)
        lw = dict(self.laws)
        for k, v in (laws or {}).items():
            if k not in lw:
                raise KeyError(f"preset {self.id!r} has no law slot {k!r}")
            lw[k] = v
        return RunContext(int(seed), p, lw)

    def run(self, seed: int, params: dict | None = None, laws: dict | None = None):
        return self.runner(self.context(seed, params, laws))


def coerce_like(default, value):
    """Parse a config string into the type of the preset default."""
    if not isinstance(value, str):
        return value
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(float(value)) if "e" in value.lower() else int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, (tuple, list)):
        items = [t for t in value.replace(",", " ").split() if t]
        kind = type(default[0]) if default else float
        return tuple(coerce_like(kind(0), t) for t in items)
    return value


def _within(x, target, tol) -> bool:
    return bool(abs(x - target) <= tol)


def _two_point(a, b):
    return EnvironmentSpec.finite_support({a: 0.5, b: 0.5})


SOLOMON = _two_point(0.9, 0.4)
CONST = EnvironmentSpec.constant(0.6)
ZERO_SPEED = _two_point(0.8, 0.3)
RECURRENT = _two_point(0.75, 0.25)


# -- runners ---------------------------------------------------------------------------

def _speed(ctx: RunContext):
    rows, pts = [], []
    for i, slot in enumerate(("main", "reference")):
        spec = ctx.laws[slot]
        v = exact1d.speed(spec) if spec.kind in ("constant", "finite_support") else exact1d.speed_ergodic(spec)
        ends = run_annealed(spec, ctx.params["N"], ctx.params["walkers"], ctx.sub_seed(i), endpoints_only=True)
        est = stats.velocity(ends, ctx.params["N"], seed=ctx.sub_seed(100 + i))
        tol = ctx.params["tolerance"]
        rows.append(Row(f"speed[{slot}] exact", v, module="exact1d"))
        rows.append(Row.from_ci(f"speed[{slot}] simulated", est, target=v, check=f"|v - exact| <= {tol}",
                                passed=_within(est.point, v, tol), module="stats.velocity"))
        pts.append((spec.label, i, est.point, v))
    plot = Plot("velocity", "annealed velocity vs exact speed", "law", "X_N / N",
                (("simulated", [p[1] for p in pts], [p[2] for p in pts]),),
                reference=(("exact", [p[1] for p in pts], [p[3] for p in pts]),))
    return rows, [plot]


def _zero_speed(ctx: RunContext):
    spec = ctx.laws["main"]
    N, n = ctx.params["N"], ctx.params["walkers"]
    ends = run_annealed(spec, N, n, ctx.sub_seed(0), endpoints_only=True)
    est = stats.velocity(ends, N, seed=ctx.sub_seed(1))
    frac = float((ends > 0).mean())
    rows = [
        Row("classification", 0.0, check=exact1d.classify(spec), module="exact1d"),
        Row("speed exact", exact1d.speed(spec), module="exact1d"),
        Row.from_ci("velocity simulated", est, target=0.0, check=f"|v| < {ctx.params['speed_bound']}",
                    passed=abs(est.point) < ctx.params["speed_bound"], module="stats.velocity"),
        Row("fraction of X_N > 0", frac, target=ctx.params["positive_fraction"],
            check=f">= {ctx.params['positive_fraction']}",
            passed=frac >= ctx.params["positive_fraction"], module="walk.run_annealed"),
    ]
    xs = np.sort(ends)
    plot = Plot("endpoints", "empirical distribution of X_N", "X_N", "fraction",
                (("X_N", xs.tolist(), (np.arange(1, len(xs) + 1) / len(xs)).tolist()),))
    return rows, [plot]


_EXIT_LAWS = (_two_point(0.8, 0.3), _two_point(0.9, 0.4), RECURRENT,
              EnvironmentSpec.finite_support({0.2: 0.3, 0.55: 0.4, 0.85: 0.3}))


def exit_instance(seed: int, index: int, max_side: int = 12):
    """Random (environment, window) pair number ``index``."""
    rng = rng_for(seed, 0xE817, index)
    spec = _EXIT_LAWS[int(rng.integers(len(_EXIT_LAWS)))]
    m_minus = int(rng.integers(1, max_side + 1))
    m_plus = int(rng.integers(1, max_side + 1))
    z = int(rng.integers(-m_minus + 1, m_plus))
    env = Environment(spec, derive_seed(seed, STREAM_PRESET, 10_000 + index))
    return env, exact1d.Window(m_minus, m_plus, z)


def _exit(ctx: RunContext):
    n_inst, trials = ctx.params["instances"], ctx.params["trials"]
    gap, worst_z, bad = 0.0, 0.0, 0
    xs, ys = [], []
    for i in range(n_inst):
        env, win = exit_instance(ctx.seed, i)
        h = exact1d.exit_probability(env, win)
        lin = exact1d.exit_probability_linear_system(env, win)[win.z + win.m_minus - 1]
        gap = max(gap, abs(h - lin))
        f = exit_left_frequency(env, win.m_minus, win.m_plus, win.z, trials, ctx.sub_seed(i))
        se = math.sqrt(max(h * (1 - h), 1.0 / trials) / trials)
        z = abs(f - h) / se
        worst_z = max(worst_z, z)
        bad += z > ctx.params["max_se"]
        xs.append(h)
        ys.append(f)
    rows = [
        Row("max |formula - linear solve|", gap, target=0.0, check=f"<= {ctx.params['exact_tol']:g}",
            passed=gap <= ctx.params["exact_tol"], module="exact1d"),
        Row("max |MC - formula| / binomial SE", worst_z, target=0.0, check=f"<= {ctx.params['max_se']}",
            passed=bad == 0, module="walk.exit_left_frequency"),
    ]
    plot = Plot("exit", "left-exit probability: Monte Carlo vs formula", "formula", "Monte Carlo",
                (("instances", xs, ys),), reference=(("y = x", [0, 1], [0, 1]),))
    return rows, [plot]


def _hitting(ctx: RunContext):
    spec = ctx.laws["main"]
    if spec.kind != "periodic":
        raise SpecError("the hitting-time preset needs a periodic law")
    env = Environment(spec, 0)
    period = len(spec.values)
    lin = exact1d.expected_tau_periodic(spec.values)
    rows, labels, sim = [], [], []
    for x in range(period):
        series = exact1d.expected_tau(env, x)
        rows.append(Row(f"E tau phase {x} series", series, target=float(lin[x]),
                        check=f"|series - linear solve| <= {ctx.params['exact_tol']:g}",
                        passed=_within(series, lin[x], ctx.params["exact_tol"]), module="exact1d"))
        T = quenched_passage_times(env, ctx.params["walkers"], ctx.sub_seed(x), x + 1, start=x,
                                   max_steps=ctx.params["max_steps"])
        if (T < 0).any():
            raise RuntimeError("passage time censored; raise max_steps")
        est = mean_ci(T - 0.0)
        se = (est.ci_high - est.point) / 1.959963984540054
        rows.append(Row.from_ci(f"E tau phase {x} simulated", est, target=float(lin[x]), check="within 3 SE",
                                passed=abs(est.point - lin[x]) <= 3 * se, module="walk.quenched_passage_times"))
        labels.append(x)
        sim.append(est.point)
    plot = Plot("tau", "expected passage time per phase", "phase", "E tau",
                (("simulated", labels, sim),), reference=(("exact", labels, lin.tolist()),))
    return rows, [plot]


def _rate_grid(spec: EnvironmentSpec, k: int) -> np.ndarray:
    """Interior points of the range of log rho, where the Cramer rate is finite."""
    logs = np.log((1.0 - np.asarray(spec.values)) / np.asarray(spec.values))
    return np.linspace(logs.min(), logs.max(), k + 2)[1:-1]


def _s_param(ctx: RunContext):
    rows = []
    for slot in ("main", "reference"):
        spec = ctx.laws[slot]
        s = exact1d.s_parameter(spec)
        s2 = exact1d.s_from_rate(spec)
        tol = ctx.params["tolerance"]
        rows.append(Row(f"s[{slot}] root of E rho^s = 1", s, module="exact1d.s_parameter"))
        rows.append(Row(f"s[{slot}] min J(y)/y", s2, target=s, check=f"<= {tol:g} apart",
                        passed=_within(s2, s, tol), module="exact1d.s_from_rate"))
    spec = ctx.laws["main"]
    v = exact1d.speed(spec)
    ys = _rate_grid(spec, 49)
    J = [exact1d.cramer_rate(spec, y) for y in ys]
    plot = Plot("cramer", "Cramer rate of sums of log rho", "y", "J(y)", (("J", ys.tolist(), J),))
    rows.append(Row("speed (for reference)", v, module="exact1d.speed"))
    return rows, [plot]


def _annealed_slowdown(ctx: RunContext):
    spec = ctx.laws["main"]
    s = exact1d.s_parameter(spec)
    target = 1.0 - s
    fit = stats.slowdown_exponent_annealed(spec, ctx.params["w"], ctx.params["delta"], ctx.params["n_grid"],
                                           ctx.params["samples"], ctx.sub_seed(0))
    tol = ctx.params["tolerance"]
    rows = [Row(f"P(X_n < (w + delta) n) at n={n}", float(math.exp(y)), module="stats.slowdown_probabilities")
            for n, y in zip(fit.n, fit.statistic)]
    rows.append(Row("fitted slope", fit.slope, fit.slope - 1.96 * fit.slope_se, fit.slope + 1.96 * fit.slope_se,
                    target=target, check=f"|slope - (1 - s)| <= {tol}", passed=_within(fit.slope, target, tol),
                    module="stats.slowdown_exponent_annealed"))
    x = np.log(np.asarray(fit.n, dtype=float))
    plot = Plot("slowdown", "annealed slowdown probability", "log n", "log p_n",
                (("estimate", x.tolist(), list(fit.statistic)),),
                reference=(("slope 1 - s", x.tolist(), (fit.intercept + target * x).tolist()),))
    return rows, [plot]


def _quenched_slowdown(ctx: RunContext):
    spec, ref = ctx.laws["main"], ctx.laws["reference"]
    w, delta, grid, eta = ctx.params["w"], ctx.params["delta"], ctx.params["n_grid"], ctx.params["eta"]
    method, samples = ctx.params["method"], ctx.params["samples"]
    annealed_slope = 1.0 - exact1d.s_parameter(spec)
    rows, series, slopes = [], [], []
    lo = hi = math.nan
    logn = np.log(np.asarray(grid, dtype=float))
    for i in range(ctx.params["environments"]):
        env = Environment(spec, ctx.sub_seed(1000 + i))
        rep = stats.slowdown_quenched_diagnostic(env, w, delta, grid, samples, ctx.sub_seed(i), eta, method)
        lo, hi = rep.bracket
        rows.append(Row(f"env {i}: slope of log(-log p_n)", rep.fit.slope, target=rep.target,
                        check=f"diagnostic bracket [{lo:.3f}, {hi:.3f}]", module="stats.slowdown_quenched_diagnostic"))
        logp = np.log(rep.probabilities)
        poly = float(np.polyfit(logn, logp, 1)[0])
        rows.append(Row(f"env {i}: slope of log p_n vs log n", poly, target=annealed_slope,
                        check="steeper than annealed 1 - s", passed=poly < annealed_slope,
                        module="stats.quenched_slowdown_probabilities"))
        slopes.append(rep.fit.slope)
        series.append((f"env {i}", logn.tolist(), list(rep.fit.statistic)))
    med = float(np.median(slopes))
    rows.append(Row("median slope over environments", med, target=(lo + hi) / 2, check=f"inside [{lo:.3f}, {hi:.3f}]",
                    passed=lo <= med <= hi, module="stats.slowdown_quenched_diagnostic"))
    rep = stats.slowdown_quenched_diagnostic(Environment(ref, 0), w, delta, grid, samples, ctx.sub_seed(99),
                                             eta, method)
    tol = ctx.params["deterministic_tolerance"]
    rows.append(Row("deterministic environment: slope", rep.fit.slope, target=1.0, check=f"|slope - 1| <= {tol}",
                    passed=_within(rep.fit.slope, 1.0, tol), module="stats.slowdown_quenched_diagnostic"))
    series.append(("deterministic", logn.tolist(), list(rep.fit.statistic)))
    plot = Plot("quenched_slowdown", "quenched slowdown probability", "log n", "log(-log p_n)", tuple(series))
    return rows, [plot]


def _aging(ctx: RunContext):
    spec = ctx.laws["main"]
    h, eta = ctx.params["h"], ctx.params["eta"]
    target = stats.aging_formula(h)
    est_big = stats.aging_correlator(spec, ctx.params["n"], h, eta, ctx.params["samples"], ctx.sub_seed(0))
    est_small = stats.aging_correlator(spec, ctx.params["n_small"], h, eta, ctx.params["samples"], ctx.sub_seed(1))
    tol = ctx.params["tolerance"]
    rows = [
        Row("limit formula", target, module="stats.aging_formula"),
        Row.from_ci(f"estimate n={ctx.params['n']}", est_big, target=target, check=f"|estimate - limit| <= {tol}",
                    passed=_within(est_big.point, target, tol), module="stats.aging_correlator"),
        Row.from_ci(f"estimate n={ctx.params['n_small']}", est_small, target=target,
                    module="stats.aging_correlator"),
        Row("distance gain (small n minus large n)", abs(est_small.point - target) - abs(est_big.point - target),
            target=0.0, check="> 0", passed=abs(est_big.point - target) < abs(est_small.point - target),
            module="stats.aging_correlator"),
    ]
    ns = [ctx.params["n_small"], ctx.params["n"]]
    plot = Plot("aging", "two-time correlator", "n", "P(|X_{n^h} - X_n| < eta log^2 n)",
                (("estimate", ns, [est_small.point, est_big.point]),),
                reference=(("limit", ns, [target, target]),))
    return rows, [plot]


def _localization(ctx: RunContext):
    spec = ctx.laws["main"]
    grid = ctx.params["n_grid"]
    rep = stats.sinai_localization(spec, grid, ctx.params["samples"], ctx.params["eta"], ctx.sub_seed(0))
    rows = [Row.from_ci(f"fraction localized n={n}", f, module="stats.sinai_localization")
            for n, f in zip(rep.n, rep.fractions)]
    first, last = rep.fractions[0], rep.fractions[-1]
    se = math.hypot(first.half_width, last.half_width) / 1.959963984540054
    sep = (last.point - first.point) / se if se > 0 else math.inf
    rows.append(Row("separation (largest n minus smallest n) in SE", sep, target=3.0, check=">= 3",
                    passed=sep >= 3.0, module="stats.sinai_localization"))
    plot = Plot("localization", "fraction within eta of the valley bottom", "n", "fraction",
                (("estimate", list(map(int, rep.n)), [f.point for f in rep.fractions]),))
    return rows, [plot]


def _regeneration(ctx: RunContext):
    spec = ctx.laws["main"]
    v = exact1d.speed(spec)
    decs = []
    for k, traj in enumerate(run_annealed(spec, ctx.params["N"], ctx.params["walkers"], ctx.sub_seed(0))):
        decs.append(regen.regeneration_times(traj))
    rep = regen.slabs_iid_check(decs, ctx.params["level"], seed=ctx.sub_seed(1))
    lln = regen.lln_via_regeneration(decs, seed=ctx.sub_seed(2))
    n_slabs = sum(len(d.usable_slabs()) for d in decs)
    rows = [
        Row("usable slabs", float(n_slabs), module="regen"),
        Row("lag-1 p-value, durations", rep.p_duration, check=f"> {rep.level / 2:g}",
            passed=rep.p_duration > rep.level / 2, module="regen.slabs_iid_check"),
        Row("lag-1 p-value, displacements", rep.p_displacement, check=f"> {rep.level / 2:g}",
            passed=rep.p_displacement > rep.level / 2, module="regen.slabs_iid_check"),
        Row.from_ci("velocity from slabs", lln, target=v, check="interval contains exact speed",
                    passed=lln.contains(v), module="regen.lln_via_regeneration"),
    ]
    dur = np.array([s.duration for d in decs for s in d.usable_slabs()], dtype=float)
    vals, counts = np.unique(np.minimum(dur, 60), return_counts=True)
    plot = Plot("slabs", "slab durations (capped at 60)", "duration", "count",
                (("slabs", vals.tolist(), counts.tolist()),))
    return rows, [plot]


def _coupling(ctx: RunContext):
    rows, ps = [], []
    slots = [k for k in ctx.laws if k.startswith("law")]
    for i, slot in enumerate(sorted(slots)):
        spec = ctx.laws[slot]
        env = Environment(spec, ctx.sub_seed(500 + i))
        for j, eps in enumerate(ctx.params["eps"]):
            params = CouplingParams(eps, spec.dimension)
            a = quenched_endpoints(env, ctx.params["N"], ctx.params["walkers"], ctx.sub_seed(10 * i + 2 * j))
            b = quenched_endpoints(env, ctx.params["N"], ctx.params["walkers"], ctx.sub_seed(10 * i + 2 * j + 1),
                                   coupling=params)
            rep = stats.distribution_equality_test(a, b)
            rows.append(Row(f"{slot} eps={eps}: chi-square p-value", rep.p_value, check=f"> {ctx.params['level']}",
                            passed=rep.p_value > ctx.params["level"], module="stats.distribution_equality_test"))
            ps.append(rep.p_value)
    plot = Plot("coupling", "coupled vs direct X_N: chi-square p-values", "case", "p-value",
                (("p", list(range(len(ps))), ps),),
                reference=(("level", [0, max(len(ps) - 1, 1)], [ctx.params["level"]] * 2),))
    return rows, [plot]


def _product_walk(ctx: RunContext):
    residual = ctx.laws["residual"]
    q = np.full(10, ctx.params["q"])
    N, per, n_seeds, M = ctx.params["N"], ctx.params["walkers_per_seed"], ctx.params["seeds"], ctx.params["margin"]
    S = float(q.sum())
    drift = float(sum(p * (v[0] - v[1]) for v, p in zip(residual.values, residual.probs)))
    direct, pieces, seed_dens, seed_se = [], [], [], []
    identity_ok = True
    for s in range(n_seeds):
        master = ctx.sub_seed(s)
        dens = []
        for k in range(per):
            es, ws = walker_seeds(master, k)
            try:
                traj = run_product_walk(residual, q, N, es, ws)
            except AssertionError:
                identity_ok = False
                continue
            rec = traj.rui_record
            identity_ok &= bool(np.array_equal(traj.positions[:, :5], rec.R[rec.U]))
            direct.append(traj.positions[-1, 5] / N)
            cuts = regen.cut_times(rec.R, margin=M)
            dens.append(cuts.density)
            pieces.append(regen.cut_increments(traj, cuts, 5))
        dens = np.asarray(dens)
        seed_dens.append(float(dens.mean()))
        seed_se.append(float(dens.std(ddof=1) / math.sqrt(len(dens))) if len(dens) > 1 else math.inf)
    v_direct = stats.velocity(np.asarray(direct), 1, seed=ctx.sub_seed(900))
    v_cut, r1, p_r1 = regen.lln_via_cutpoints(pieces, seed=ctx.sub_seed(901))
    seed_dens = np.asarray(seed_dens)
    pooled = float(seed_dens.mean())
    z = np.abs(seed_dens - pooled) / np.asarray(seed_se)
    rows = [
        Row("identity X1_n = R_{U_n} on every path", float(identity_ok), target=1.0, check="exact",
            passed=identity_ok, module="walk.run_product_walk"),
        Row("heuristic velocity (1 - S) x residual drift", (1 - S) * drift, module="presets"),
        Row.from_ci("velocity direct", v_direct, module="stats.velocity"),
        Row.from_ci("velocity from cut increments", v_cut, check="95% intervals overlap direct",
                    passed=v_cut.overlaps(v_direct), module="regen.lln_via_cutpoints"),
        Row("lag-1 autocorrelation of cut increments", r1, module="regen.lln_via_cutpoints"),
        Row("min cut density over seeds", float(seed_dens.min()), check="> 0",
            passed=bool(seed_dens.min() > 0), module="regen.cut_times"),
        Row("max |seed density - pooled| / SE", float(z.max()), target=0.0, check="<= 3",
            passed=bool(z.max() <= 3.0), module="regen.cut_times"),
    ]
    plot = Plot("cut_density", "cut-time density per seed", "seed", "density",
                (("density", list(range(n_seeds)), seed_dens.tolist()),),
                reference=(("pooled", [0, n_seeds - 1], [pooled, pooled]),))
    return rows, [plot]


def _stable(ctx: RunContext):
    rows, series, refs = [], [], []
    tol = ctx.params["tolerance"]
    for i, slot in enumerate(("main", "reference")):
        spec = ctx.laws[slot]
        s = exact1d.s_parameter(spec)
        target = 0.5 if s > 2 else 1.0 / s
        fit = stats.stable_scaling(spec, ctx.params["n_grid"], ctx.params["samples"], ctx.sub_seed(i))
        rows.append(Row(f"spread slope [{slot}]", fit.slope, fit.slope - 1.96 * fit.slope_se,
                        fit.slope + 1.96 * fit.slope_se, target=target, check=f"|slope - target| <= {tol}",
                        passed=_within(fit.slope, target, tol), module="stats.stable_scaling"))
        x = np.log(np.asarray(fit.n, dtype=float))
        series.append((slot, x.tolist(), list(fit.statistic)))
        refs.append((f"slope {target:.3f}", x.tolist(), (fit.intercept + target * x).tolist()))
    plot = Plot("spread", "interquantile spread of T_n", "log n", "log spread", tuple(series), reference=tuple(refs))
    return rows, [plot]


def _rates(ctx: RunContext):
    spec = ctx.laws["main"]
    rows = []
    env = Environment(spec, ctx.sub_seed(0))
    ws = ctx.params["w_grid"]
    qv, av = [], []
    for w in ws:
        iq = exact1d.quenched_rate_slowdown(env, w, ctx.params["n"])
        ia = exact1d.annealed_rate_upper(spec, w, np.linspace(0.30, 0.70, ctx.params["tilts"]),
                                         ctx.sub_seed(0), ctx.params["n"])
        rows.append(Row(f"quenched rate at w={w}", iq, module="exact1d.quenched_rate_slowdown"))
        rows.append(Row(f"annealed upper bound at w={w}", ia.value, target=iq, check="<= quenched rate",
                        passed=ia.value <= iq + 1e-12, module="exact1d.annealed_rate_upper"))
        qv.append(iq)
        av.append(ia.value)
    ys = _rate_grid(spec, 37)
    J = np.array([exact1d.cramer_rate(spec, y) for y in ys])
    second = J[:-2] - 2 * J[1:-1] + J[2:]
    rows.append(Row("min second difference of J", float(second.min()), target=0.0, check=">= -1e-9",
                    passed=bool(second.min() >= -1e-9), module="exact1d.cramer_rate"))
    plot = Plot("rates", "slowdown rate functions", "w", "rate",
                (("quenched", list(ws), qv), ("annealed upper bound", list(ws), av)))
    return rows, [plot]


def _nestling(ctx: RunContext):
    rows = []
    for slot in sorted(k for k in ctx.laws if k.startswith("law")):
        spec = ctx.laws[slot]
        nest = is_nestling(spec)
        rows.append(Row(f"{slot} nestling", float(nest), module="env.is_nestling"))
        if spec.dimension == 1 and spec.kind in ("constant", "finite_support") and exact1d.classify(spec) == "transient_right":
            s = exact1d.s_parameter(spec)
            ok = math.isfinite(s) == nest
            rows.append(Row(f"{slot} s-parameter", s, check="finite exactly when nestling", passed=ok,
                            module="exact1d.s_parameter"))
    return rows, []


def _tail(ctx: RunContext):
    spec = ctx.laws["main"]
    s = exact1d.s_parameter(spec)
    cap = ctx.params["max_steps"]
    tau = annealed_passage_times(spec, ctx.params["samples"], ctx.sub_seed(0), 1, cap)
    h = stats.tail_index(tau, ctx.params["k_fraction"], cap=cap)
    tol = ctx.params["tolerance"]
    rows = [Row.from_ci("Hill tail index", h.estimate, target=s, check=f"|alpha - s| <= {tol}",
                        passed=_within(h.estimate.point, s, tol), module="stats.tail_index"),
            Row("censored samples", float(h.n_censored), module="stats.tail_index")]
    rows += [Row(f"Hill at k fraction {f:g}", a, module="stats.tail_index") for f, a in h.sweep.items()]
    x = np.sort(np.where(tau < 0, cap, tau).astype(float))[::-1]
    k = np.unique(np.geomspace(1, len(x) - 1, 40).astype(int))
    plot = Plot("tail", "empirical tail of tau_1", "log t", "log P(tau > t)",
                (("tail", np.log(x[k]).tolist(), np.log(k / len(x)).tolist()),))
    return rows, [plot]


_LATTICE2 = EnvironmentSpec.lattice_product(
    2, [((0.35, 0.15, 0.25, 0.25), 0.5), ((0.2, 0.3, 0.25, 0.25), 0.5)])
_RESIDUAL = EnvironmentSpec.lattice_product(1, [((0.7, 0.3), 0.5), ((0.4, 0.6), 0.5)], require_elliptic=False)

CATALOG: dict[str, Preset] = {p.id: p for p in [
    Preset("solomon-speed", "annealed velocity against the exact i.i.d. speed",
           "speed formula for i.i.d. environments", 120,
           {"walkers": 500, "N": 100_000, "tolerance": 0.01}, {"main": SOLOMON, "reference": CONST}, _speed),
    Preset("zero-speed-transience", "transient walk with zero speed",
           "zero-speed transience regime", 600,
           {"walkers": 200, "N": 1_000_000, "speed_bound": 0.005, "positive_fraction": 0.95},
           {"main": ZERO_SPEED}, _zero_speed),
    Preset("exit-probability", "left-exit formula vs linear solve vs Monte Carlo",
           "explicit exit probability from an interval", 300,
           {"instances": 100, "trials": 100_000, "exact_tol": 1e-10, "max_se": 4.0}, {}, _exit),
    Preset("hitting-time-recursion", "periodic expected passage times by series, linear solve and simulation",
           "expected hitting time recursion", 120,
           {"walkers": 100_000, "exact_tol": 1e-8, "max_steps": 10_000_000},
           {"main": EnvironmentSpec.periodic([0.8, 0.4])}, _hitting),
    Preset("s-parameter", "root of E rho^s = 1 against the Cramer-rate characterization",
           "s-parameter and the Cramer rate", 5,
           {"tolerance": 1e-6}, {"main": SOLOMON, "reference": _two_point(0.8, 0.3)}, _s_param),
    Preset("annealed-slowdown", "polynomial decay of annealed slowdown probabilities",
           "annealed slowdown exponent 1 - s", 1800,
           {"w": 0.0, "delta": 0.025, "n_grid": (250, 500, 1000, 2000), "samples": 1_000_000, "tolerance": 0.25},
           {"main": SOLOMON}, _annealed_slowdown),
    Preset("quenched-slowdown", "stretched-exponential decay of quenched slowdown probabilities (diagnostic)",
           "quenched slowdown exponent", 900,
           {"w": 0.0, "delta": 0.025, "n_grid": (250, 500, 1000, 2000, 4000, 8000), "samples": 100_000,
            "eta": 0.3, "environments": 5, "method": "exact", "deterministic_tolerance": 0.25},
           {"main": SOLOMON, "reference": CONST}, _quenched_slowdown),
    Preset("sinai-aging", "two-time correlator of the recurrent walk against its limit",
           "aging in the recurrent regime", 1200,
           {"n": 10_000, "n_small": 100, "h": 2.0, "eta": 0.5, "samples": 10_000, "tolerance": 0.1},
           {"main": RECURRENT}, _aging),
    Preset("sinai-localization", "localization near the bottom of the deepest valley",
           "localization of the recurrent walk at scale (log n)^2", 900,
           {"n_grid": (100, 10_000), "samples": 2_000, "eta": 0.5}, {"main": RECURRENT}, _localization),
    Preset("regeneration-slabs", "independence of regeneration slabs and the slab law of large numbers",
           "regeneration structure", 300,
           {"walkers": 20, "N": 50_000, "level": 0.01}, {"main": CONST}, _regeneration),
    Preset("coupling-marginals", "the coin-coupled walk keeps the quenched law",
           "coin coupling construction", 300,
           {"eps": (0.1, 0.2), "N": 20, "walkers": 100_000, "level": 0.01},
           {"law1": CONST, "law2": ZERO_SPEED, "law3": _LATTICE2}, _coupling),
    Preset("product-walk-cutpoints", "product-structure walk, cut times and velocity",
           "walks with a fixed kernel on five coordinates", 1200,
           {"q": 0.07, "N": 100_000, "walkers_per_seed": 15, "seeds": 20, "margin": 1000},
           {"residual": _RESIDUAL}, _product_walk),
    Preset("stable-scaling", "interquantile spread of passage times",
           "stable fluctuations of hitting times", 1200,
           {"n_grid": (1000, 2000, 4000, 7000, 10_000), "samples": 2000, "tolerance": 0.1},
           {"main": SOLOMON, "reference": CONST}, _stable),
    Preset("rate-functions", "quenched and annealed slowdown rates and convexity of the Cramer rate",
           "quenched and annealed large deviations", 120,
           {"w_grid": (0.02, 0.05, 0.08), "n": 10_000, "tilts": 41}, {"main": SOLOMON}, _rates),
    Preset("nestling", "nestling classification against finiteness of s",
           "nestling and non-nestling laws", 5, {},
           {"law1": ZERO_SPEED, "law2": _two_point(0.9, 0.6), "law3": SOLOMON, "law4": CONST,
            "law5": _LATTICE2}, _nestling),
    Preset("tail-index", "Hill estimate of the tail of the first passage time",
           "tail of hitting times", 600,
           {"samples": 1_000_000, "k_fraction": 3e-4, "max_steps": 1_000_000_000, "tolerance": 0.3},
           {"main": SOLOMON}, _tail),
]}


def list_presets() -> list[Preset]:
    return list(CATALOG.values())


def get_preset(name: str) -> Preset:
    try:
        return CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; known: {', '.join(CATALOG)}") from None
