"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts at the stated tolerance.
"""

import math
import random
import time
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.stats import chisquare

from tvdist.fpras import contribution_bounds, estimate_tv_distinct_q, estimate_tv_halfcase, estimate_tv_uniform
from tvdist.instances import EstimatorParams, ProductDistribution, TvInstance, normalize
from tvdist.oracle import (
    SubsetSumInstance,
    count_pmf_equals,
    count_subset_sum,
    enumerate_discretized_solutions,
    enumerate_twoterm_solutions,
    exact_tv,
    pmf_table,
)
from tvdist.reductions import pmf_equals_to_tv_instances, recover_count, subset_sum_to_pmf_equals
from tvdist.twoterm import (
    Engine,
    TwoTermLayers,
    class_keys,
    count_discretized,
    discretized_total,
    empty_set_feasible,
)

from helpers import fine_halfcase_instance, halfcase_instance, layer_constraint, random_constraint


def _mixed_halfcase(rng, n):
    return halfcase_instance(rng, n) if rng.random() < 0.5 else fine_halfcase_instance(rng, n)


def test_oracle_equivalence(criterion):
    rng = random.Random(20240601)
    t0 = time.perf_counter()
    ok = 0
    trials = 200
    for k in range(trials):
        inst = _mixed_halfcase(rng, rng.randint(4, 14))
        est = estimate_tv_halfcase(inst, EstimatorParams(F(1, 10), F(1, 20), rng.getrandbits(64)))
        tv = exact_tv(inst)
        ok += 0.9 * float(tv) <= est.value <= 1.1 * float(tv)
    elapsed = time.perf_counter() - t0
    passed = ok >= 0.95 * trials and elapsed <= 600
    criterion("1 oracle equivalence (half-case, eps=0.1)", passed, f"{ok}/{trials} within 10%, {elapsed:.0f}s")
    assert ok >= 0.95 * trials
    assert elapsed <= 600


def _constraint_pool(rng, count, max_n, dup_quota=0):
    out = []
    while len(out) < count:
        n = rng.randint(1, max_n)
        if len(out) < dup_quota:
            c = random_constraint(rng, max(n, 3), dup=rng.randint(1, max(n, 3) // 2))
        elif rng.random() < 0.6:
            c = layer_constraint(rng, n)
        else:
            c = random_constraint(rng, n)
        if c is not None:
            out.append(c)
    return out


def test_discretization_soundness_and_blowup(criterion):
    rng = random.Random(7)
    inclusion_fail = blowup_fail = nonempty = 0
    worst = 0.0
    pool = []
    while len(pool) < 100:
        c = layer_constraint(rng, rng.randint(1, 12))
        if c is None:
            continue
        truth = enumerate_twoterm_solutions(c)
        # layers high enough to be empty make the blow-up bound vacuous; keep a few
        if len(truth) or rng.random() < 0.1:
            pool.append((c, truth))
    for c, truth in pool:
        rounded = {int(m) for m in enumerate_discretized_solutions(c)}
        if not {int(m) for m in truth.masks} <= rounded:
            inclusion_fail += 1
        if len(truth):
            nonempty += 1
            worst = max(worst, len(rounded) / len(truth) / (c.n + 1) ** 2)
            if len(rounded) > (c.n + 1) ** 2 * len(truth):
                blowup_fail += 1
    passed = inclusion_fail == 0 and blowup_fail == 0
    criterion(
        "2 discretization soundness + (n+1)^2 blow-up",
        passed,
        f"100 layer constraints ({nonempty} nonempty), inclusion failures {inclusion_fail}, "
        f"blow-up failures {blowup_fail}, max ratio/(n+1)^2 = {worst:.3f}",
    )
    assert passed


def test_dp_exactness(criterion):
    rng = random.Random(11)
    pool = _constraint_pool(rng, 100, 12, dup_quota=25)
    mismatches = ie_mismatches = 0
    for c in pool:
        brute = len(enumerate_discretized_solutions(c))
        if discretized_total(c) != brute:
            mismatches += 1
        per_class = 0
        for key in class_keys(c.x, c.z):
            table, N = count_discretized(c, key)
            if N != table.F4 - (table.F1 + table.F2 - table.F3):
                ie_mismatches += 1
            per_class += N
        if per_class + int(empty_set_feasible(c)) != brute:
            mismatches += 1
    passed = mismatches == 0 and ie_mismatches == 0
    criterion(
        "3 DP exactness vs brute force",
        passed,
        f"100 instances (25 with duplicated tuples), total mismatches {mismatches}, F4-(F1+F2-F3) mismatches {ie_mismatches}",
    )
    assert passed


def test_sampler_uniformity(criterion):
    rng = random.Random(5)
    pvals = []
    sizes = []
    while len(pvals) < 20:
        n = rng.randint(2, 8)
        c = layer_constraint(rng, n) if rng.random() < 0.5 else random_constraint(rng, n, dup=rng.randint(0, 1))
        if c is None:
            continue
        sols = [int(m) for m in enumerate_discretized_solutions(c)]
        if len(sols) < 2:
            continue
        eng = Engine(c.x, c.z, TwoTermLayers([c.log_A], c.log_B))
        _, masks = eng.draw({0: 100_000}, 0, rng.getrandbits(64), with_masks=True)[0]
        idx = {m: i for i, m in enumerate(sols)}
        counts = np.bincount([idx[int(m)] for m in masks], minlength=len(sols))
        pvals.append(chisquare(counts).pvalue)
        sizes.append(len(sols))
    passed = min(pvals) > 1e-3
    criterion(
        "4 sampler uniformity (chi^2, 1e5 draws)",
        passed,
        f"20 instances, |S'| in [{min(sizes)}, {max(sizes)}], min p-value {min(pvals):.4f}",
    )
    assert passed


def test_reduction_identities(criterion):
    rng = random.Random(3)
    claim_fail = 0
    cases = {"small-v": 0, "large-v": 0}
    for _ in range(60):
        n = rng.randint(1, 8)
        p = [F(rng.randint(1, 7), 8) if rng.random() < 0.8 else F(rng.randint(1, 4), 5) for _ in range(n)]
        table = pmf_table(p)
        v = rng.choice(table) if rng.random() < 0.8 else F(1, rng.randint(2, 600))
        if v == 0:
            v = F(1, 7)
        b = pmf_equals_to_tv_instances(ProductDistribution(p), v)
        cases[b.case] += 1
        diff = exact_tv(b.prime) - exact_tv(b.hat)
        count = count_pmf_equals(p, v)
        expected = 2 * b.beta * v * count if b.case == "small-v" else b.beta * count / 2 ** (n - 1)
        claim_fail += diff != expected
    round_fail = 0
    for _ in range(60):
        n = rng.randint(1, 8)
        inst = SubsetSumInstance([rng.randint(-3, 6) for _ in range(n)], rng.randint(-2, 10))
        d, v = subset_sum_to_pmf_equals(inst)
        b = pmf_equals_to_tv_instances(d, v)
        got = recover_count(b, exact_tv(b.prime), exact_tv(b.hat))
        round_fail += got != count_subset_sum(inst)
    passed = claim_fail == 0 and round_fail == 0 and min(cases.values()) > 0
    criterion(
        "5 reduction identities + subset-sum round trip",
        passed,
        f"60 bundles {cases}, identity failures {claim_fail}; 60 round trips, failures {round_fail}",
    )
    assert passed


def test_m_bound(criterion):
    """Every nonzero contribution is at least the formula value m (exact)."""
    rng = random.Random(17)
    bad = 0
    example = None
    trials = 200
    for _ in range(trials):
        inst, _ = normalize(_mixed_halfcase(rng, rng.randint(1, 12)))
        if inst.n == 0:
            continue
        m = contribution_bounds(inst).m
        P, Q = pmf_table(inst.p), pmf_table(inst.q)
        small = [a - b for a, b in zip(P, Q) if 0 < a - b < m]
        if small:
            bad += 1
            if example is None:
                example = (inst.n, float(min(small)), float(m))
    passed = bad == 0
    detail = f"{trials - bad}/{trials} instances satisfy the bound"
    if example:
        detail += f"; e.g. n={example[0]}: contribution {example[1]:.3g} < m={example[2]:.3g}"
    criterion("6 m lower bound on nonzero contributions", passed, detail)
    assert passed, detail


def test_fast_paths(criterion):
    rng = random.Random(99)
    params = lambda s: EstimatorParams(F(1, 10), F(1, 20), s)
    ok_u = ok_d = 0
    for seed in range(100):
        n = rng.randint(4, 14)
        p = [F(rng.randint(1, 15), 16) for _ in range(n)]
        tv = float(exact_tv(TvInstance.of(p, [F(1, 2)] * n)))
        v = estimate_tv_uniform(ProductDistribution(p), params(seed)).value
        ok_u += abs(v - tv) <= 0.1 * tv
    for seed in range(100):
        n = rng.randint(4, 14)
        a, b = F(rng.randint(1, 15), 16), F(rng.randint(1, 9), 10)
        while b == a:
            b = F(rng.randint(1, 9), 10)
        q = [a if rng.random() < 0.5 else b for _ in range(n)]
        p = [F(rng.randint(1, 15), 16) for _ in range(n)]
        inst = TvInstance.of(p, q)
        tv = float(exact_tv(inst))
        v = estimate_tv_distinct_q(inst, params(seed)).value
        ok_d += abs(v - tv) <= 0.1 * tv
    passed = ok_u >= 95 and ok_d >= 95
    criterion("7 fast paths (uniform Q, k=2 distinct q)", passed, f"uniform {ok_u}/100, distinct-q {ok_d}/100")
    assert passed


def test_scaling_smoke(criterion):
    rng = random.Random(60)
    inst = halfcase_instance(rng, 60)
    t0 = time.perf_counter()
    est = estimate_tv_halfcase(inst, EstimatorParams(F(1, 4), F(1, 20), 60))
    elapsed = time.perf_counter() - t0
    t = [r.t_hat for r in est.layers]
    violations = sum(
        1
        for a, b in zip(t, t[1:])
        if b.value > a.value + 3 * math.sqrt(a.stderr**2 + b.stderr**2) + 1e-9
    )
    passed = elapsed <= 900 and est.value >= 0 and violations == 0
    criterion(
        "8 scaling smoke test (n=60, eps=0.25)",
        passed,
        f"{elapsed:.0f}s, value {est.value:.4g}, {len(t)} layers, grid factor {est.grid_factor}, "
        f"monotonicity violations {violations}",
    )
    assert passed
