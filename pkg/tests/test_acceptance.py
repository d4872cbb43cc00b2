"""Acceptance criteria 1-11, each at its stated tolerance and time budget.

Every test records a PASS/FAIL line; the lines are printed together at the
end of the run (see ``conftest.py``) and also inline with ``pytest -s``.
"""

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from constlab import boxnorm, constellations as cs, forms, measures, wtrick
from constlab.constellations import Shape
from constlab.forms import AverageRunConfig, LinearFormSystem
from constlab.measures import CylinderEvent, CylinderSpec
from constlab.sieve import sieve_primes
from constlab.wtrick import DenseSubset, WeightField

from conftest import trial_division

LINES: list[str] = []


def verdict(n, ok, detail, elapsed, budget):
    ok = ok and elapsed <= budget
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.2f}s / {budget}s)"
    LINES.append(line)
    print(line)
    assert ok, line


def random_shape(rng, d, k, lo=-3, hi=3):
    vecs = set()
    while len(vecs) < k:
        vecs.add(tuple(int(x) for x in rng.integers(lo, hi + 1, size=d)))
    return Shape(tuple(sorted(vecs)))


def random_subset(rng, d, N):
    density = float(rng.choice([0.1, 0.3, 0.6, 0.9]))
    if rng.random() < 0.5:
        return DenseSubset.product([np.flatnonzero(rng.random(N) < density) + 1 for _ in range(d)], bound=N)
    pts = np.argwhere(rng.random((N,) * d) < density) + 1
    return DenseSubset.from_points(pts, bound=N, d=d)


def test_criterion_01_sieve():
    t0 = time.perf_counter()
    table = sieve_primes(10**6)
    count_ok = table.count == 78498
    mism = sum(table.is_prime(n) != trial_division(n) for n in range(10**5 + 1))
    verdict(1, count_ok and mism == 0, f"pi(10^6)={table.count}, trial-division mismatches={mism}",
            time.perf_counter() - t0, 5)


def test_criterion_02_counting_oracle():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    bad, dims, neg, kmax, total = 0, set(), 0, 0, 240
    caps = {1: 500, 2: 120, 3: 30}
    for i in range(total):
        d = i % 3 + 1
        k = int(rng.integers(1, 7))
        shape = random_shape(rng, d, k)
        N = int(rng.integers(2, caps[d] + 1))
        A = random_subset(rng, d, N)
        dims.add(d)
        neg += any(c < 0 for v in shape.vectors for c in v)
        kmax = max(kmax, k)
        bad += cs.count_fast(shape, A, N) != cs.count_bruteforce(shape, A, N).count
    ok = bad == 0 and dims == {1, 2, 3} and neg > 0 and kmax == 6
    verdict(2, ok, f"{total} instances, mismatches={bad}, shapes with negative coords={neg}, max k={kmax}",
            time.perf_counter() - t0, 60)


def test_criterion_03_dilation():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    caps = {1: 400, 2: 60, 3: 20}
    bad, total = 0, 120
    for i in range(total):
        d = i % 3 + 1
        shape = random_shape(rng, d, int(rng.integers(2, 5)))
        N = int(rng.integers(2, caps[d] + 1))
        A = random_subset(rng, d, N)
        s = int(rng.choice([2, 3]))
        res = cs.dilation_check(shape, s, A, N)
        bad += not res.equal
        if i % 10 == 0:  # lhs also against the brute-force oracle
            bad += res.lhs != cs.count_bruteforce(shape.scaled(s), A, N).count
    verdict(3, bad == 0, f"{total} instances, failures={bad}", time.perf_counter() - t0, 30)


def test_criterion_04_forms_factorisation():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst, total = 0.0, 220
    for _ in range(total):
        d, m = int(rng.integers(1, 3)), int(rng.integers(0, 3))
        fams = []
        for _ in range(d):
            k = int(rng.integers(1, 4))
            rows = {tuple(int(x) for x in rng.integers(-3, 4, size=m)) for _ in range(k)}
            fams.append([list(r) for r in rows])
        system = LinearFormSystem.build(fams, m=m)
        n = int(rng.integers(4, 25))
        nus = [WeightField.from_values(rng.random(n) * (rng.random(n) < 0.7) * 2) for _ in range(d)]
        cfg = AverageRunConfig(tuple(int(x) for x in rng.integers(1, 6, size=m)), n)
        a = forms.evaluate_naive(system, nus, cfg).value
        b = forms.evaluate_fast(system, nus, cfg).value
        rel = abs(a - b) / abs(a) if a else abs(b)
        worst = max(worst, rel)
    verdict(4, worst <= 1e-9, f"{total} systems, worst relative error={worst:.2e}", time.perf_counter() - t0, 60)


def test_criterion_05_identity_normalisation():
    t0 = time.perf_counter()
    n = 500
    ones = [WeightField.ones(n, untruncated=True)] * 2
    system = LinearFormSystem.build([[[0, 0], [1, 2], [3, -1]], [[0, 1], [2, 2]]])
    lf = forms.evaluate_fast(system, ones, AverageRunConfig((5, 7), n)).value
    small = [WeightField.ones(30, untruncated=True)] * 2
    lf_naive = forms.evaluate_naive(system, small, AverageRunConfig((2, 3), 30)).value
    box = []
    for b in range(1, 5):
        nu = {s: np.ones((3,) * len(s)) for s in boxnorm.subsets(b) if len(s) < b}
        f = {s: np.ones((3,) * len(s)) for s in boxnorm.subsets(b)}
        inst = boxnorm.BoxInstance(n=b, H=3, nu=nu, f=f)
        box += [boxnorm.box_norm(inst, s, f[s]) for s in boxnorm.subsets(b)]
    spec = CylinderSpec.of([0, 1, 4], [0, -2])
    mass = measures.measure(CylinderEvent.make(spec, []), DenseSubset.empty(2, n), ones, n, 9).total_mass
    vals = [lf, lf_naive, mass, *box]
    worst = max(abs(v - 1) for v in vals)
    verdict(5, worst <= 1e-12, f"{len(vals)} quantities, max |value-1|={worst:.1e}", time.perf_counter() - t0, 5)


def test_criterion_06_von_neumann():
    t0 = time.perf_counter()
    summary = boxnorm.von_neumann_fuzz(500, seed=0, max_n=3, max_h=6)
    ok = summary.passed and summary.min_slack >= -1e-9
    verdict(6, ok, f"500 instances, violations={summary.failures}, min slack={summary.min_slack:.2e}",
            time.perf_counter() - t0, 120)


def test_criterion_07_linear_forms_trend():
    t0 = time.perf_counter()
    table = sieve_primes(wtrick.table_limit_for(10**8, 7), max_limit=2 * 10**8)
    system = LinearFormSystem.build([[[0], [1]]])
    devs = []
    for N in (10**6, 10**7, 10**8):
        s = wtrick.setup(table, N, 7)
        cfg = AverageRunConfig.from_kappa(s.context.n_prime, 1, 0.01, lam=0.5)
        devs.append(forms.evaluate_fast(system, s.weights, cfg).deviation)
    steps = sum(b <= a for a, b in zip(devs, devs[1:]))
    ok = devs[-1] <= 0.25 and steps >= 2
    verdict(7, ok, "deviations " + ", ".join(f"{d:.4f}" for d in devs) + f"; non-increasing steps={steps}/2",
            time.perf_counter() - t0, 600)


def test_criterion_08_compatibility():
    t0 = time.perf_counter()
    n, M, passing, gaps = 10**5, 10**3, 0, []
    fine = CylinderSpec.of([0, 1])
    for seed in range(20):
        nu = WeightField.bernoulli(n, 0.1, np.random.default_rng(seed))
        A = DenseSubset.from_points(nu.support[:, None], bound=n)
        gap = measures.compatibility_gap(CylinderEvent.base(1), fine, A, [nu], n, M).gap
        gaps.append(gap)
        passing += gap <= 0.05
    verdict(8, passing >= 18, f"{passing}/20 trials with gap <= 0.05 (max gap {max(gaps):.4f})",
            time.perf_counter() - t0, 120)


def test_criterion_09_shift_invariance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    within, total = 0, 0
    for i in range(40):
        d = i % 2 + 1
        n, M = int(rng.integers(10, 40)), int(rng.integers(1, 5))
        A = random_subset(rng, d, n)
        weights = [WeightField.from_values(rng.random(n) * 2) for _ in range(d)]
        spec = CylinderSpec.of(*([[0, 1]] * d))
        ev = CylinderEvent.make(spec, [spec.grid()[int(rng.integers(len(spec.grid())))]],
                                str(rng.choice(["superset", "exact"])))
        h = tuple(int(x) for x in rng.integers(-2, 3, size=d))
        within += measures.shift_gap(ev, h, A, weights, n, M).within_bound
        total += 1
    table = sieve_primes(wtrick.table_limit_for(10**6, 2))
    s = wtrick.setup(table, 10**6, 2)
    prime = measures.shift_gap(CylinderEvent.base(1), (1,), s.subset, s.weights, s.context.n_prime, 10**3)
    within += prime.within_bound
    total += 1
    ok = within == total and prime.gap <= 0.05
    verdict(9, ok, f"{within}/{total} within boundary bound; prime gap={prime.gap:.2e} "
                   f"(bound {prime.boundary_mass:.2e})", time.perf_counter() - t0, 120)


def test_criterion_10_scaling_flatness():
    t0 = time.perf_counter()
    ap = cs.scaling_report(Shape.of(0, 1, 2), [10**4, 3 * 10**4, 10**5])
    square = cs.scaling_report(Shape.of((0, 0), (1, 0), (0, 1), (1, 1)), [200, 500, 1000])
    ok = ap.flatness <= 3 and square.flatness <= 4
    verdict(10, ok, f"3-AP max/min={ap.flatness:.3f} (<=3), square max/min={square.flatness:.3f} (<=4)",
            time.perf_counter() - t0, 300)


def test_criterion_11_partition_of_unity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst, total = 0.0, 60
    for i in range(total):
        d = i % 2 + 1
        n, M = int(rng.integers(8, 30)), int(rng.integers(1, 6))
        A = random_subset(rng, d, n)
        weights = [WeightField.from_values(rng.random(n) * 2 * (rng.random(n) < 0.8)) for _ in range(d)]
        omega = [sorted({int(x) for x in rng.integers(-2, 3, size=int(rng.integers(1, 3)))}) for _ in range(d)]
        spec = CylinderSpec.of(*omega)
        grid = spec.grid()
        parts = [
            measures.measure(CylinderEvent.make(spec, b0, "exact"), A, weights, n, M).value
            for k in range(len(grid) + 1) for b0 in itertools.combinations(grid, k)
        ]
        mass = measures.measure(CylinderEvent.make(spec, []), A, weights, n, M).total_mass
        worst = max(worst, abs(math.fsum(parts) - mass))
    verdict(11, worst <= 1e-9, f"{total} instances, max |sum - totalMass|={worst:.1e}",
            time.perf_counter() - t0, 30)
