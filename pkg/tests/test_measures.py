import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from constlab import forms, measures, wtrick
from constlab.errors import BudgetError, ConfigError
from constlab.measures import CylinderEvent, CylinderSpec
from constlab.wtrick import DenseSubset, WeightField

from conftest import trial_division


def loop_measure(event, A, weights, n, M):
    """Direct sum over (a, r) of the cylinder integrand."""
    pts = {tuple(p) for p in A.points.tolist()}
    grid = event.spec.grid()
    d = event.spec.d
    total = 0.0
    for r in range(1, M + 1):
        for a in itertools.product(range(1, n + 1), repeat=d):
            wt = 1.0
            for i in range(d):
                for c in event.spec.omega[i]:
                    wt *= float(weights[i].take(a[i] + c * r))
            if wt == 0.0:
                continue
            hit = {b for b in grid if tuple(a[i] + r * b[i] for i in range(d)) in pts}
            if event.mode == "superset":
                ok = set(event.b0) <= hit
            else:
                ok = hit == set(event.b0)
            total += wt * ok
    return total / (n**d * M)


def random_setup(rng, d, n, product):
    if product:
        factors = [np.sort(rng.choice(np.arange(1, n + 1), size=int(rng.integers(1, n)), replace=False))
                   for _ in range(d)]
        A = DenseSubset.product(factors, bound=n)
    else:
        A = DenseSubset.from_points(rng.integers(1, n + 1, size=(3 * n, d)), bound=n, d=d)
    weights = [WeightField.from_values(rng.random(n) * 2 * (rng.random(n) < 0.8)) for _ in range(d)]
    return A, weights


def test_untruncated_empty_event():
    n = 40
    ev = CylinderEvent.make(CylinderSpec.of([0, 1], [0, 2]), [])
    A = DenseSubset.empty(2, n)
    ones = [WeightField.ones(n, untruncated=True)] * 2
    rep = measures.measure(ev, A, ones, n, 4)
    assert rep.value == 1.0 and rep.total_mass == 1.0


def test_two_loop_example():
    n, M = 30, 5
    ps = [p for p in range(1, n + 1) if trial_division(p)]
    A = DenseSubset.from_points([[p] for p in ps], bound=n)
    ev = CylinderEvent.make(CylinderSpec.of([0, 1]), [(0,), (1,)])
    ones = [WeightField.ones(n)]
    count = sum(1 for r in range(1, M + 1) for a in range(1, n + 1)
                if a in ps and a + r in ps and a + r <= n)
    assert measures.measure(ev, A, ones, n, M).value == pytest.approx(count / (n * M), rel=1e-14)


@pytest.mark.parametrize("d,product,mode", [(1, True, "superset"), (1, False, "exact"),
                                            (2, True, "exact"), (2, False, "superset"),
                                            (2, False, "exact")])
def test_loop_oracle(rng, d, product, mode):
    n, M = 9, 3
    A, weights = random_setup(rng, d, n, product)
    spec = CylinderSpec.of(*([[0, 1]] + [[0, -1]] * (d - 1)))
    grid = spec.grid()
    for _ in range(4):
        k = int(rng.integers(0, len(grid) + 1))
        b0 = [grid[i] for i in rng.choice(len(grid), size=k, replace=False)]
        ev = CylinderEvent.make(spec, b0, mode)
        got = measures.measure(ev, A, weights, n, M).value
        assert got == pytest.approx(loop_measure(ev, A, weights, n, M), rel=1e-12, abs=1e-15)


def test_partition_of_unity_and_superset_sum(rng):
    n, M = 25, 4
    A, weights = random_setup(rng, 2, n, False)
    spec = CylinderSpec.of([0, 1], [0, 2])
    grid = spec.grid()
    exact = {}
    for k in range(len(grid) + 1):
        for b0 in itertools.combinations(grid, k):
            exact[frozenset(b0)] = measures.measure(CylinderEvent.make(spec, b0, "exact"), A, weights, n, M).value
    total = measures.measure(CylinderEvent.make(spec, []), A, weights, n, M).total_mass
    assert math.fsum(exact.values()) == pytest.approx(total, abs=1e-9)
    for b0 in [(), (grid[0],), (grid[1], grid[3])]:
        sup = measures.measure(CylinderEvent.make(spec, b0), A, weights, n, M).value
        expect = math.fsum(v for key, v in exact.items() if set(b0) <= key)
        assert sup == pytest.approx(expect, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_superset_monotone(seed):
    rng = np.random.default_rng(seed)
    n, M = 15, 3
    A, weights = random_setup(rng, 1, n, False)
    spec = CylinderSpec.of([0, 1, 3])
    order = [(0,), (1,), (3,)]
    rng.shuffle(order)
    prev = math.inf
    for k in range(4):
        v = measures.measure(CylinderEvent.make(spec, order[:k]), A, weights, n, M).value
        assert v <= prev + 1e-15
        prev = v


def test_total_mass_matches_forms_average(rng):
    n, M = 300, 7
    A, weights = random_setup(rng, 2, n, True)
    spec = CylinderSpec.of([0, 1], [0, 2, 5])
    total = measures.measure(CylinderEvent.make(spec, []), A, weights, n, M).total_mass
    system = forms.LinearFormSystem.build([[[c] for c in om] for om in spec.omega])
    avg = forms.evaluate_fast(system, weights, forms.AverageRunConfig((M,), n)).value
    assert total == pytest.approx(avg, rel=1e-12)


def test_untruncated_total_mass_is_one():
    n = 50
    ones = [WeightField.ones(n, untruncated=True)] * 3
    spec = CylinderSpec.of([0, 1], [0], [2, 3])
    assert measures.measure(CylinderEvent.make(spec, []), DenseSubset.empty(3, n), ones, n, 5).total_mass == 1.0


def test_compatibility_untruncated_is_zero(table):
    s = wtrick.setup(table, 10**4, 3)
    ones = [WeightField.ones(s.context.n_prime, untruncated=True)]
    rep = measures.compatibility_gap(CylinderEvent.base(1), CylinderSpec.of([0, 1]), s.subset, ones,
                                     s.context.n_prime, 20)
    assert rep.gap == 0.0


def test_compatibility_bernoulli_small():
    n, M = 10**5, 10**3
    nu = WeightField.bernoulli(n, 0.1, np.random.default_rng(3))
    A = DenseSubset.from_points(nu.support[:, None], bound=n)
    rep = measures.compatibility_gap(CylinderEvent.base(1), CylinderSpec.of([0, 1]), A, [nu], n, M)
    assert rep.gap <= 0.05


def test_compatibility_requires_refinement(rng):
    A, weights = random_setup(rng, 1, 10, True)
    with pytest.raises(ConfigError):
        measures.compatibility_gap(CylinderEvent.make(CylinderSpec.of([0, 1]), [(1,)]),
                                   CylinderSpec.of([0, 2]), A, weights, 10, 2)


def test_shift_trivial_cases(rng):
    n, M = 30, 4
    A, weights = random_setup(rng, 2, n, False)
    ev = CylinderEvent.make(CylinderSpec.of([0, 1], [0]), [(0, 0)])
    assert measures.shift_gap(ev, (0, 0), A, weights, n, M).gap == 0.0
    ones = [WeightField.ones(n, untruncated=True)] * 2
    full = DenseSubset.product([np.arange(1, n + 1)] * 2, bound=n)
    rep = measures.shift_gap(CylinderEvent.make(CylinderSpec.of([0], [0]), []), (1, -2), full, ones, n, M)
    assert rep.gap == 0.0


@given(st.integers(0, 2**32 - 1), st.sampled_from([(1,), (-2,), (1, 0), (1, -1), (0, 2)]),
       st.booleans(), st.sampled_from(["superset", "exact"]))
@settings(max_examples=40, deadline=None)
def test_shift_gap_within_boundary_mass(seed, h, product, mode):
    rng = np.random.default_rng(seed)
    d, n, M = len(h), 20, 3
    A, weights = random_setup(rng, d, n, product)
    spec = CylinderSpec.of(*([[0, 1]] * d))
    ev = CylinderEvent.make(spec, [spec.grid()[-1]], mode)
    rep = measures.shift_gap(ev, h, A, weights, n, M)
    assert rep.boundary_mass >= 0
    assert rep.within_bound


def test_spec_parsing_and_caps():
    assert CylinderSpec.parse("0,1;0").omega == ((0, 1), (0,))
    assert measures.parse_points("(0,0),(1,0)") == [(0, 0), (1, 0)]
    assert measures.parse_points("") == []
    with pytest.raises(ConfigError):
        CylinderSpec.parse("0,x")
    with pytest.raises(ConfigError):
        CylinderEvent.make(CylinderSpec.of([0]), [(1,)])
    big = CylinderSpec.of(*[range(6)] * 5)
    with pytest.raises(BudgetError):
        measures.measure(CylinderEvent.make(big, []), DenseSubset.empty(5, 3), [WeightField.ones(3)] * 5, 3, 1)
    wide = CylinderSpec.of(range(6), range(6))
    with pytest.raises(BudgetError):
        measures.measure(CylinderEvent.make(wide, [], "exact"), DenseSubset.empty(2, 3),
                         [WeightField.ones(3)] * 2, 3, 1)
