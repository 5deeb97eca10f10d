import math

import pytest

from rwre.env import EnvironmentSpec
from rwre.presets import CATALOG, Plot, Row, coerce_like, get_preset, list_presets

SMALL = {
    "solomon-speed": {"walkers": 50, "N": 10000},
    "zero-speed-transience": {"walkers": 40, "N": 10000},
    "exit-probability": {"instances": 10, "trials": 2000},
    "hitting-time-recursion": {"walkers": 2000},
    "s-parameter": {},
    "annealed-slowdown": {"samples": 20000},
    "quenched-slowdown": {"n_grid": (250, 500, 1000, 2000), "environments": 3},
    "sinai-aging": {"n": 200, "n_small": 30, "samples": 300},
    "sinai-localization": {"n_grid": (100, 1000), "samples": 100},
    "regeneration-slabs": {"walkers": 3, "N": 20000},
    "coupling-marginals": {"walkers": 5000},
    "product-walk-cutpoints": {"N": 10000, "walkers_per_seed": 8, "seeds": 4},
    "stable-scaling": {"samples": 300},
    "rate-functions": {"n": 2000, "tilts": 11},
    "nestling": {},
    "tail-index": {"samples": 20000, "k_fraction": 0.01},
}


def test_catalog_size_and_ids():
    presets = list_presets()
    assert len(presets) >= 12
    ids = [p.id for p in presets]
    assert len(set(ids)) == len(ids)
    for p in presets:
        assert p.anchor and p.description and p.budget_s > 0
    assert set(SMALL) == set(CATALOG)


def test_unknown_names():
    with pytest.raises(KeyError):
        get_preset("nope")
    with pytest.raises(KeyError):
        get_preset("solomon-speed").context(1, {"bogus": 1})
    with pytest.raises(KeyError):
        get_preset("solomon-speed").context(1, laws={"bogus": EnvironmentSpec.constant(0.6)})


@pytest.mark.parametrize("name", sorted(SMALL))
def test_preset_runs_small(name):
    p = get_preset(name)
    params = {k: v for k, v in SMALL[name].items() if k in p.params}
    rows, plots = p.run(1, params)
    assert rows and all(isinstance(r, Row) for r in rows)
    assert all(isinstance(pl, Plot) for pl in plots)
    for r in rows:
        assert isinstance(r.value, float) or isinstance(r.value, int)
        if r.passed is not None:
            assert r.check


@pytest.mark.parametrize("name", ["solomon-speed", "exit-probability", "coupling-marginals"])
def test_preset_deterministic(name):
    params = SMALL[name]
    a, _ = get_preset(name).run(7, params)
    b, _ = get_preset(name).run(7, params)
    assert [(r.name, r.value) for r in a] == [(r.name, r.value) for r in b]
    c, _ = get_preset(name).run(8, params)
    if name != "exit-probability":
        assert [r.value for r in a] != [r.value for r in c]


def test_sub_seeds_differ():
    ctx = get_preset("solomon-speed").context(5)
    assert len({ctx.sub_seed(i) for i in range(100)}) == 100


def test_coerce_like():
    assert coerce_like(10, "1e6") == 10**6 and isinstance(coerce_like(10, "1e6"), int)
    assert coerce_like(10, "42") == 42
    assert coerce_like(0.5, "0.25") == 0.25
    assert coerce_like(True, "off") is False
    assert coerce_like((100, 1000), "10, 20 30") == (10, 20, 30)
    assert coerce_like((0.1,), "0.2 0.3") == (0.2, 0.3)
    assert coerce_like("x", "y") == "y"
    assert coerce_like(3, 7) == 7
    with pytest.raises(ValueError):
        coerce_like(True, "maybe")
    with pytest.raises(ValueError):
        coerce_like(3, "abc")


def test_row_from_ci():
    from rwre.estimate import EstimateWithCI
    r = Row.from_ci("v", EstimateWithCI(1.0, 0.5, 1.5, 10, "m"), module="x")
    assert (r.value, r.ci_low, r.ci_high, r.module) == (1.0, 0.5, 1.5, "x")
    assert math.isnan(Row("a", 1.0).target)
