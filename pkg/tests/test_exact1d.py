import csv
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracles
from rwre import exact1d as E
from rwre.env import Environment, EnvironmentSpec, SpecError, reflect

SOLOMON = EnvironmentSpec.finite_support({0.9: 0.5, 0.4: 0.5})
ZERO = EnvironmentSpec.finite_support({0.8: 0.5, 0.3: 0.5})
RECURRENT = EnvironmentSpec.finite_support({0.75: 0.5, 0.25: 0.5})

omega_st = st.floats(0.05, 0.95)


# -- exit probabilities ---------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.lists(omega_st, min_size=1, max_size=30), st.data())
def test_exit_formula_matches_dense_solve(omegas, data):
    k = len(omegas)
    m_minus = data.draw(st.integers(1, k))
    m_plus = k + 1 - m_minus
    z = data.draw(st.integers(-m_minus + 1, m_plus - 1))
    env = Environment(EnvironmentSpec.table(omegas, origin=-m_minus + 1))
    h = E.exit_probability(env, E.Window(m_minus, m_plus, z))
    assert h == pytest.approx(oracles.exit_left_dense(omegas, z + m_minus - 1), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40), st.integers(1, 40), st.data())
def test_exit_left_and_right_routes_sum_to_one(seed, m_minus, m_plus, data):
    z = data.draw(st.integers(-m_minus + 1, m_plus - 1))
    env = Environment(SOLOMON, seed)
    w = E.Window(m_minus, m_plus, z)
    left = E.exit_probability(env, w, "left")
    right = E.exit_probability(env, w, "right")
    assert left + right == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= left <= 1.0


def test_exit_linear_system_row():
    env = Environment(ZERO, 4)
    w = E.Window(7, 5, 0)
    h = E.exit_probability_linear_system(env, w)
    om = env.omega_array(-6, 4)
    for z in range(-6, 5):
        assert h[z + 6] == pytest.approx(oracles.exit_left_dense(om, z + 6), abs=1e-12)


def test_exit_constant_gamblers_ruin():
    # gambler's ruin with r = q / p
    p, m, M = 0.6, 4, 7
    r = (1 - p) / p
    z = 0
    expected = (r ** m - r ** (m + M)) / (1 - r ** (m + M))
    got = E.exit_probability(Environment(EnvironmentSpec.constant(p)), E.Window(m, M, z))
    assert got == pytest.approx(expected, rel=1e-12)


def test_exit_stable_for_long_windows():
    env = Environment(SOLOMON, 1)
    h = E.exit_probability(env, E.Window(2000, 2000, 0))
    assert 0.0 <= h < 1e-10
    h2 = E.exit_probability(Environment(EnvironmentSpec.constant(0.3)), E.Window(3000, 3000, 0))
    assert h2 == pytest.approx(1.0, abs=1e-12)


def test_window_validation():
    with pytest.raises(ValueError):
        E.Window(0, 3, 0)
    with pytest.raises(ValueError):
        E.Window(2, 3, 3)


# -- speed ---------------------------------------------------------------------------------

@pytest.mark.parametrize("law", [SOLOMON, ZERO, RECURRENT, EnvironmentSpec.constant(0.6),
                                 EnvironmentSpec.constant(0.3),
                                 EnvironmentSpec.finite_support({0.2: 0.3, 0.55: 0.4, 0.85: 0.3})])
def test_speed_iid_matches_closed_form(law):
    vals = law.values
    probs = law.probs or (1.0,)
    assert E.speed(law) == pytest.approx(oracles.iid_speed(vals, probs), abs=1e-14)


def test_speed_reference_values():
    assert E.speed(SOLOMON) == pytest.approx(0.107692307692, abs=1e-10)
    assert E.speed(EnvironmentSpec.constant(0.6)) == pytest.approx(0.2)
    assert E.speed(ZERO) == 0.0
    assert E.classify(ZERO) == "transient_right"
    assert E.classify(RECURRENT) == "recurrent"
    assert E.classify(EnvironmentSpec.constant(0.3)) == "transient_left"


def test_speed_mirror_antisymmetry():
    law = EnvironmentSpec.finite_support({0.1: 0.5, 0.6: 0.5})   # mirror of SOLOMON
    assert E.speed(law) == pytest.approx(-E.speed(SOLOMON))


def test_speed_ergodic_periodic_closed_form():
    spec = EnvironmentSpec.periodic([0.8, 0.4])
    t = oracles.periodic_tau_by_substitution([0.8, 0.4])
    assert E.speed_ergodic(spec) == pytest.approx(2 / sum(t), rel=1e-10)


def test_speed_ergodic_markov_with_iid_rows_equals_iid_speed():
    spec = EnvironmentSpec.markov([0.9, 0.4], [[0.5, 0.5], [0.5, 0.5]])
    assert E.speed_ergodic(spec) == pytest.approx(E.speed(SOLOMON), rel=1e-10)


def test_speed_ergodic_zero_and_negative():
    zero = EnvironmentSpec.markov([0.8, 0.3], [[0.5, 0.5], [0.5, 0.5]])
    assert E.speed_ergodic(zero) == 0.0
    neg = EnvironmentSpec.periodic([0.2, 0.6])
    t = oracles.periodic_tau_by_substitution([0.8, 0.4])   # mirror image
    assert E.speed_ergodic(neg) == pytest.approx(-2 / sum(t), rel=1e-10)
    with pytest.raises(SpecError):
        E.speed_ergodic(SOLOMON)


def test_speed_ergodic_markov_against_spatial_average():
    # correlated chain with light tails: 1 / speed is the spatial average of E_omega tau_x
    spec = EnvironmentSpec.markov([0.9, 0.6], [[0.8, 0.2], [0.3, 0.7]])
    v = E.speed_ergodic(spec)
    env = Environment(spec, 3)
    taus = [E.expected_tau(env, x) for x in range(0, 40000, 5)]
    assert 1 / np.mean(taus) == pytest.approx(v, rel=0.01)


def test_speed_ergodic_heavy_runs_give_zero_speed():
    # long runs of rho = 1.5 make the transfer series diverge although u < 0
    spec = EnvironmentSpec.markov([0.9, 0.4], [[0.8, 0.2], [0.3, 0.7]])
    assert E.classify(spec) == "transient_right"
    assert E.speed_ergodic(spec) == 0.0


# -- expected hitting times ------------------------------------------------------------

def test_expected_tau_periodic_reference():
    env = Environment(EnvironmentSpec.periodic([0.8, 0.4]))
    assert E.expected_tau(env, 0) == pytest.approx(3.0, abs=1e-8)
    assert E.expected_tau(env, 1) == pytest.approx(7.0, abs=1e-8)
    assert E.expected_tau_periodic([0.8, 0.4]) == pytest.approx([3.0, 7.0])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.3, 0.95), min_size=1, max_size=5))
def test_expected_tau_series_vs_substitution(omegas):
    t = oracles.periodic_tau_by_substitution(omegas)
    assume(all(math.isfinite(x) and x < 1e5 for x in t))
    env = Environment(EnvironmentSpec.periodic(omegas))
    lin = E.expected_tau_periodic(omegas)
    for x in range(len(omegas)):
        assert lin[x] == pytest.approx(t[x], rel=1e-9)
        assert E.expected_tau(env, x) == pytest.approx(t[x], rel=1e-8)


def test_expected_tau_infinite_for_zero_speed():
    env = Environment(EnvironmentSpec.constant(0.5))
    assert E.expected_tau(env, 0) == math.inf
    assert E.expected_tau(Environment(EnvironmentSpec.periodic([0.6, 0.4])), 1) == math.inf
    assert E.expected_tau_periodic([0.4]) == pytest.approx([math.inf])
    recurrent = Environment(EnvironmentSpec.finite_support({0.6: 0.5, 0.4: 0.5}), 1)
    assert E.expected_tau(recurrent, 0) == math.inf


def test_annealed_expected_tau():
    assert E.annealed_expected_tau(SOLOMON) == pytest.approx(1 / E.speed(SOLOMON))
    assert E.annealed_expected_tau(ZERO) == math.inf


# -- s-parameter and Cramer rate -------------------------------------------------------

@pytest.mark.parametrize("law,value", [(SOLOMON, 1.678), (ZERO, 0.450)])
def test_s_parameter_reference(law, value):
    s = E.s_parameter(law)
    assert s == pytest.approx(value, abs=5e-4)
    assert s == pytest.approx(oracles.s_root(law.values, law.probs), abs=1e-10)


def test_s_parameter_edge_cases():
    assert E.s_parameter(EnvironmentSpec.constant(0.6)) == math.inf
    with pytest.raises(SpecError):
        E.s_parameter(RECURRENT)


@pytest.mark.parametrize("law", [SOLOMON, ZERO])
def test_s_equals_min_rate_over_y(law):
    assert E.s_from_rate(law) == pytest.approx(E.s_parameter(law), abs=1e-6)


@settings(max_examples=40, deadline=None)
@given(st.floats(-2.19, 0.40))
def test_cramer_rate_vs_scipy(y):
    got = E.cramer_rate(SOLOMON, y)
    ref = oracles.cramer_by_minimize(SOLOMON.values, SOLOMON.probs, y)
    assert got == pytest.approx(ref, abs=1e-7)


def test_cramer_rate_zero_at_mean_and_infinite_outside():
    u = 0.5 * (math.log(1 / 9) + math.log(1.5))
    assert E.cramer_rate(SOLOMON, u) == pytest.approx(0.0, abs=1e-10)
    assert E.cramer_rate(SOLOMON, 0.5) == math.inf
    assert E.cramer_rate(SOLOMON, math.log(1.5)) == pytest.approx(math.log(2))


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.1, 0.35), st.floats(-2.1, 0.35), st.floats(0.0, 1.0))
def test_cramer_rate_convex(a, b, t):
    lhs = E.cramer_rate(SOLOMON, t * a + (1 - t) * b)
    rhs = t * E.cramer_rate(SOLOMON, a) + (1 - t) * E.cramer_rate(SOLOMON, b)
    assert lhs <= rhs + 1e-8


def test_golden_max():
    x, v = E.golden_max(lambda t: -(t - 0.3) ** 2 + 2, -1, 2, 1e-12)
    assert x == pytest.approx(0.3, abs=1e-6)
    assert v == pytest.approx(2.0, abs=1e-12)


# -- Laplace transforms and quenched rates -----------------------------------------------

@pytest.mark.parametrize("lam", [0.0, 0.05, 0.5, 2.0])
def test_quenched_laplace_constant_closed_form(lam):
    env = Environment(EnvironmentSpec.constant(0.6))
    assert E.quenched_laplace(env, lam, 2000) == pytest.approx(oracles.constant_laplace(0.6, lam), abs=1e-12)


def test_quenched_laplace_self_averaging():
    a = E.quenched_laplace(Environment(SOLOMON, 1), 0.05, 10**4)
    b = E.quenched_laplace(Environment(SOLOMON, 2), 0.05, 10**4)
    assert a == pytest.approx(b, abs=1e-2)
    assert a < 0


def test_quenched_log_mgf_blows_up():
    env = Environment(SOLOMON, 1)
    assert math.isfinite(E.quenched_log_mgf(env, 1e-4, 5000))
    assert E.quenched_log_mgf(env, 1.0, 5000) == math.inf
    with pytest.raises(ValueError):
        E.quenched_log_mgf(env, -0.1, 10)


@pytest.mark.parametrize("w", [0.05, 0.1, 0.15])
def test_quenched_rate_constant_equals_bernoulli_cramer(w):
    env = Environment(EnvironmentSpec.constant(0.6))
    assert E.quenched_rate_slowdown(env, w, 2000) == pytest.approx(oracles.bernoulli_cramer(0.6, w), abs=1e-6)


def test_quenched_rate_zero_at_speed_and_positive_below():
    env = Environment(SOLOMON, 3)
    v = E.speed(SOLOMON)
    assert E.quenched_rate_slowdown(env, v + 0.01, 10**4) == pytest.approx(0.0, abs=1e-6)
    assert E.quenched_rate_slowdown(env, 0.05, 10**4) > 0


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_annealed_upper_bound_below_quenched_rate(seed):
    env = Environment(SOLOMON, seed)
    for w in (0.02, 0.05):
        iq = E.quenched_rate_slowdown(env, w, 10**4)
        ia = E.annealed_rate_upper(SOLOMON, w, np.linspace(0.3, 0.7, 41), seed, 10**4)
        assert ia.value <= iq + 1e-12
        assert ia.method == "upper_bound"
    # with a fine grid near the law the bound is strictly smaller
    ia = E.annealed_rate_upper(SOLOMON, 0.05, np.linspace(0.45, 0.55, 21), seed, 10**4)
    assert ia.value < E.quenched_rate_slowdown(env, 0.05, 10**4)


def test_relative_entropy():
    assert E.relative_entropy([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert E.relative_entropy([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))


# -- potential, traps and valleys --------------------------------------------------------

def test_potential_edges():
    env = Environment(SOLOMON, 5)
    prof = E.potential(env, -10, 10)
    assert prof.at(0) == 0.0
    lr = env.log_rho_array(-9, 10)
    assert prof.at(3) == pytest.approx(lr[9 + 1:9 + 4].sum())
    assert prof.at(-2) == pytest.approx(-lr[8:10].sum())
    assert prof.trap_average(1, 4) == pytest.approx(lr[11:15].mean())


def test_find_traps_brute():
    env = Environment(ZERO, 2)
    lr = env.log_rho_array(-50, 80)
    got = E.find_traps(env, 5, 0.3, -50, 70)
    brute = [z for z in range(-50, 71) if lr[z + 1 + 50:z + 6 + 50].mean() >= 0.3 - 1e-12]
    assert got.tolist() == brute


def _check_valley(W, a, b, c, depth, i0):
    assert a < i0 <= c
    assert W[b] == W[a:c + 1].min()
    assert W[a] - W[b] >= depth and W[c] - W[b] >= depth


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([100, 1000, 10**4]))
def test_sinai_valley_properties(seed, n):
    env = Environment(RECURRENT, seed)
    v = E.sinai_valley(env, n)
    prof = E.potential(env, v.left - 5, v.right + 5)
    W = prof.W
    off = -prof.lo
    _check_valley(W, v.left + off, v.bottom + off, v.right + off, math.log(n), off)
    assert v.scaled_bottom == v.bottom / math.log(n) ** 2


def test_valley_reflection():
    for seed in range(20):
        env = Environment(RECURRENT, seed)
        v = E.sinai_valley(env, 1000)
        w = 4 * max(abs(v.left), abs(v.right)) + 200
        mirrored = reflect(env, -w, w)
        vm = E.sinai_valley(mirrored, 1000, half_width=w // 2)
        prof = E.potential(env, v.left, v.right)
        if np.sum(prof.W == prof.W.min()) == 1:
            assert vm.bottom == -v.bottom - 1


def test_valley_of_potential_hand_made():
    # a single well around the origin; rims are the first records reaching the depth
    W = np.array([4.0, 2.0, 1.0, 0.0, -1.0, 0.5, 2.0, 3.5])
    prof = E.PotentialProfile(-3, W)
    assert E.valley_of_potential(prof, 3.0) == (-2, 1, 3)
    assert E.valley_of_potential(prof, 6.0) is None


def test_sinai_valley_rejects_transient():
    with pytest.raises(SpecError):
        E.sinai_valley(Environment(SOLOMON, 1), 100)


# -- law of X_t ---------------------------------------------------------------------------

@pytest.mark.parametrize("t", [1, 2, 17, 60])
def test_quenched_distribution_small_t(t):
    env = Environment(RECURRENT, 3)
    lo, p = E.quenched_distribution(env, 0, t)
    om = env.omega_array(lo, lo + len(p) - 1)
    ref = oracles.exact_walk_law(om, lo, 0, t)
    assert np.abs(p - ref).max() < 1e-13
    assert p.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quenched_distribution_routes_agree(seed):
    env = Environment(RECURRENT, seed)
    t = 20000
    lo, direct = E.quenched_distribution(env, 0, t, direct_limit=math.inf)
    lo2, spectral = E.quenched_distribution(env, 0, t, direct_limit=0)
    assert lo == lo2
    assert np.abs(direct - spectral).max() < 1e-10
    assert spectral.sum() == pytest.approx(1.0, abs=1e-9)


def test_quenched_distribution_parity_and_support():
    env = Environment(SOLOMON, 1)
    lo, p = E.quenched_distribution(env, 3, 101)
    x = lo + np.arange(len(p))
    assert p[(x - 3 - 101) % 2 != 0].max() == 0.0
    assert p[np.abs(x - 3) > 101].sum() == 0.0


def test_quenched_ball_probability():
    env = Environment(RECURRENT, 4)
    lo, p = E.quenched_distribution(env, 2, 500)
    x = lo + np.arange(len(p))
    ref = p[np.abs(x - 2) < 7.5].sum()
    assert E.quenched_ball_probability(env, 2, 500, 7.5) == pytest.approx(ref, abs=1e-12)
    assert E.quenched_ball_probability(env, 2, 500, 8.0) == pytest.approx(p[np.abs(x - 2) < 8].sum(), abs=1e-12)


def test_quenched_distribution_window_guard():
    with pytest.raises(ValueError):
        E.quenched_distribution(Environment(SOLOMON, 1), 0, 10**6, max_width=1000)


# -- export ---------------------------------------------------------------------------------

def test_evaluate_and_export(tmp_path):
    rows = [E.evaluate("speed", SOLOMON),
            E.evaluate("s_parameter", RECURRENT),
            E.evaluate("exit_probability", ZERO, m_minus=3, m_plus=4, z=1, env_seed=2)]
    assert rows[0].value == pytest.approx(E.speed(SOLOMON)) and rows[0].error == ""
    assert math.isnan(rows[1].value) and rows[1].error.startswith("SpecError")
    with pytest.raises(KeyError):
        E.evaluate("nope", SOLOMON)
    path = tmp_path / "exact.csv"
    E.export_rows_csv(rows, path)
    data = list(csv.reader(open(path)))
    assert data[0] == ["operation", "spec_id", "parameters", "value", "error"]
    assert data[3][2] == "env_seed=2;m_minus=3;m_plus=4;z=1"
    assert float(data[1][3]) == rows[0].value
