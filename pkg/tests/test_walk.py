import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sst

from rwre import exact1d as E
from rwre import walk as W
from rwre.env import Environment, EnvironmentSpec, SpecError

TWO = EnvironmentSpec.finite_support({0.9: 0.5, 0.4: 0.5})
LAT = EnvironmentSpec.lattice_product(2, [((0.35, 0.15, 0.25, 0.25), 0.5), ((0.2, 0.3, 0.25, 0.25), 0.5)])
RESIDUAL = EnvironmentSpec.lattice_product(1, [((0.7, 0.3), 0.5), ((0.4, 0.6), 0.5)], require_elliptic=False)
Q = np.full(10, 0.007)


def test_quenched_walk_replays():
    env = Environment(TWO, 11)
    a = W.run_quenched(env, 0, 2000, 5)
    b = W.run_quenched(Environment(TWO, 11), 0, 2000, 5)
    c = W.run_quenched(env, 0, 2000, 6)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)
    assert a.check_unit_steps() and a.positions[0] == 0 and a.n_steps == 2000


def test_lattice_walk_unit_steps():
    t = W.run_quenched(Environment(LAT, 3), 0, 500, 1)
    assert t.positions.shape == (501, 2) and t.dimension == 2
    assert t.check_unit_steps()
    assert np.array_equal(t.projection((1, 1)), t.positions.sum(axis=1))


def test_projection_rejects_wrong_direction():
    t = W.run_quenched(Environment(TWO, 1), 0, 10, 1)
    with pytest.raises(ValueError):
        t.projection((1, 0))
    assert np.array_equal(t.projection(-1), -t.positions)


@pytest.mark.parametrize("spec", [TWO, EnvironmentSpec.markov([0.9, 0.4], [[0.6, 0.4], [0.4, 0.6]])])
def test_endpoints_match_full_trajectories(spec):
    full = W.run_annealed(spec, 300, 25, 7)
    ends = W.run_annealed(spec, 300, 25, 7, endpoints_only=True)
    assert np.array_equal(ends, [t.positions[-1] for t in full])
    assert np.array_equal(W.run_annealed(spec, 300, 5, 7, endpoints_only=True, first=20), ends[20:])


def test_quenched_endpoints_match_walk_seeds():
    env = Environment(TWO, 2)
    ends = W.quenched_endpoints(env, 200, 50, 9)
    assert ends.shape == (50,)
    assert np.array_equal(ends, W.quenched_endpoints(env, 200, 50, 9))
    assert np.all(np.abs(ends) <= 200) and np.all(ends % 2 == 0)


def test_annealed_velocity_near_exact_speed():
    ends = W.run_annealed(TWO, 20000, 200, 1, endpoints_only=True)
    v = W.velocities(ends, 20000)
    assert abs(v.mean() - E.speed(TWO)) < 5 * v.std(ddof=1) / math.sqrt(len(v)) + 0.01


def test_coupling_params_validation():
    with pytest.raises(ValueError):
        W.CouplingParams(0.0)
    with pytest.raises(ValueError):
        W.CouplingParams(0.5, dimension=2)
    with pytest.raises(ValueError):
        W.CouplingParams(0.3).check_law(EnvironmentSpec.constant(0.9))
    with pytest.raises(SpecError):
        W.CouplingParams(0.1).check_law(LAT)
    W.CouplingParams(0.1, dimension=2).check_law(LAT)


@pytest.mark.parametrize("omega,eps", [(0.6, 0.1), (0.3, 0.2), (0.5, 0.05)])
def test_coupled_step_law_preserves_kernel(omega, eps):
    assert W.coupled_step_law(omega, eps) == pytest.approx(omega, abs=1e-15)


def test_coupled_walk_first_step_frequency():
    env = Environment(EnvironmentSpec.constant(0.6), 0)
    params = W.CouplingParams(0.2)
    rights = sum(W.run_coupled(env, params, 1, walk_seed=s).positions[1] == 1 for s in range(4000))
    assert sst.binomtest(int(rights), 4000, 0.6).pvalue > 1e-3


def test_coupled_coins_force_steps():
    env = Environment(TWO, 4)
    t = W.run_coupled(env, W.CouplingParams(0.2), 3000, walk_seed=8)
    steps = np.diff(t.positions)
    forced = t.coin_record != 0
    assert forced.any()
    assert np.array_equal(steps[forced], np.where(t.coin_record[forced] == 1, 1, -1))
    # coins fire with total probability eps
    assert abs(forced.mean() - 0.2) < 5 * math.sqrt(0.2 * 0.8 / 3000)


def test_product_walk_identity_and_R():
    t = W.run_product_walk(RESIDUAL, Q, 5000, env_seed=3, walk_seed=4)
    rec = t.rui_record
    assert t.positions.shape == (5001, 6) and t.check_unit_steps()
    assert np.array_equal(t.positions[:, :5], rec.R[rec.U])
    assert np.array_equal(np.diff(rec.U), rec.I)
    assert t.meta["S"] == pytest.approx(0.07)
    R = W.sample_R(Q, 4, rec.U[-1])
    assert np.array_equal(R, rec.R)


def test_product_walk_spec_validation():
    with pytest.raises(ValueError):
        W.product_walk_spec(RESIDUAL, np.full(10, 0.2))
    with pytest.raises(ValueError):
        W.product_walk_spec(RESIDUAL, np.full(9, 0.01))
    with pytest.raises(SpecError):
        W.product_walk_spec(TWO, Q)
    spec = W.product_walk_spec(RESIDUAL, Q)
    assert spec.dimension == 6
    for v in spec.values:
        assert sum(v) == pytest.approx(1.0)


@given(st.lists(st.sampled_from([-1, 1]), min_size=1, max_size=60))
def test_hitting_times_by_definition(steps):
    Z = np.concatenate([[0], np.cumsum(steps)]).astype(np.int64)
    h = W.hitting_times(W.Trajectory(Z, 0, 0), max_level=70)
    top = max(Z.max(), 0)
    assert len(h.T) == top
    for n, t in enumerate(h.T, start=1):
        assert Z[t] == n and (Z[:t] < n).all()
    assert np.array_equal(h.tau, np.diff(h.T))
    assert h.censored_levels.tolist() == list(range(top + 1, 71))


def test_records_roundtrip(tmp_path):
    t = W.run_quenched(Environment(LAT, 1), 0, 300, 2)
    path, hdr = W.write_records(t, tmp_path / "walk.bin", "lattice")
    assert path.stat().st_size == 301 * 3 * 8
    back = W.read_records(path)
    assert np.array_equal(back.positions, t.positions)
    assert (back.env_seed, back.walk_seed) == (1, 2)
    t1 = W.run_quenched(Environment(TWO, 1), 0, 50, 2)
    W.write_records(t1, tmp_path / "one.bin")
    assert np.array_equal(W.read_records(tmp_path / "one.bin").positions, t1.positions)


def test_projection_csv(tmp_path):
    t = W.run_quenched(Environment(TWO, 1), 0, 20, 2)
    W.export_projection_csv(t, tmp_path / "z.csv", stride=5)
    lines = (tmp_path / "z.csv").read_text().splitlines()
    assert lines[0] == "n,x_dot_l"
    assert [int(l.split(",")[0]) for l in lines[1:]] == [0, 5, 10, 15, 20]


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32))
def test_exit_frequency_matches_exact(seed):
    env = Environment(TWO, seed)
    n = 20000
    p = E.exit_probability(env, E.Window(4, 6, 0))
    f = W.exit_left_frequency(env, 4, 6, 0, n, seed + 1)
    assert abs(f - p) <= 5 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_passage_times_censoring():
    times = W.annealed_passage_times(EnvironmentSpec.constant(0.3), 50, 1, level=5, max_steps=200)
    assert (times == -1).all()
    times = W.annealed_passage_times(EnvironmentSpec.constant(0.8), 200, 1, level=5, max_steps=10**5)
    assert (times >= 5).all()
    assert abs(times.mean() - 5 / 0.6) < 5 * times.std() / math.sqrt(200)
    q = W.quenched_passage_times(Environment(TWO, 3), 30, 2, level=3)
    assert (q >= 3).all()


def test_backtrack_depth():
    t = W.Trajectory(np.array([0, 1, 2, 3, 2, 1, 2]), 0, 0)
    assert W.backtrack_depth(t) == 1
