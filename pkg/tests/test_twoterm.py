import math
import random
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from tvdist.oracle import enumerate_discretized_solutions, enumerate_twoterm_solutions
from tvdist.twoterm import (
    ClassKey,
    Engine,
    KnapsackLayers,
    TwoTermConstraint,
    TwoTermLayers,
    class_keys,
    count_discretized,
    count_knapsack,
    count_knapsack_grouped,
    discretize,
    discretized_total,
    empty_set_feasible,
    enumerate_classes,
    estimate_count,
    sample_discretized,
    scale_weights,
)

from helpers import layer_constraint, random_constraint


def _key_for(c, w1, w2):
    return next(k for k in class_keys(c.x, c.z) if k.W1 == w1 and k.W2 == w2)


def test_constraint_validation():
    with pytest.raises(ValueError):
        TwoTermConstraint(0.1, 0.1, [-0.1], [0.5])
    with pytest.raises(ValueError):
        TwoTermConstraint(0.1, 0.1, [0.5], [-0.6])
    with pytest.raises(ValueError):
        TwoTermConstraint(-1, 0.1, [0.5], [0.0])
    c = TwoTermConstraint(0.25, 0.5, [1.0, 0.5], [0.5, -0.5])
    assert c.z == (1.5, 0.0)
    assert c.value([0]) == pytest.approx(0.25 * math.e + 0.5 * math.exp(1.5))
    assert c.exact_member([]) and not c.exact_member([0])


def test_discretize_examples():
    c = TwoTermConstraint(0.1, 0.1, [1.0, 0.26, 0.0, 0.5], [0.0, 0.0, 0.3, 0.0])
    d = discretize(c, _key_for(c, 1.0, 1.0))
    xp = dict(zip(d.key.Sigma, d.xprime))
    assert xp[0] == 40 and xp[1] == 10 and xp[2] == 0
    assert all(0 <= v <= 40 for v in d.xprime + d.zprime)


def test_discretize_zero_w1():
    c = TwoTermConstraint(0.1, 0.1, [0.0, 0.0], [0.4, 0.2])
    d = discretize(c, _key_for(c, 0.0, 0.4))
    assert d.xprime == (0, 0)
    assert list(scale_weights([0.0, 0.0], 0.0, 20)) == [0, 0]


def test_count_discretized_vacuous_class():
    c = TwoTermConstraint(0.0, 0.0, [1.0, 0.5, 0.2], [1.0, 0.5, 0.3])
    key = _key_for(c, 1.0, 2.0)
    assert key.R1 == key.R2 == (0,)
    table, N = count_discretized(c, key)
    assert N == 2 ** (len(key.Sigma) - 1) == 4
    assert table.N == table.F4 - (table.F1 + table.F2 - table.F3)


def test_count_discretized_mandatory_item_infeasible():
    c = TwoTermConstraint(0.5, 0.4, [3.0, 0.1], [0.0, 0.1])
    key = _key_for(c, 3.0, 3.0)
    _, N = count_discretized(c, key)
    assert N == 0


def test_count_table_cells():
    c = TwoTermConstraint(0.0, 0.0, [1.0, 1.0], [0.0, 0.0])
    table, N = count_discretized(c, _key_for(c, 1.0, 1.0), grid_factor=1)
    # K = 2: each item has x' = z' = 2
    assert table.F(0, 0, 0) == 1
    assert table.F(table.steps, 4, 4) == 1 and table.F(table.steps, 2, 2) == 2
    assert table.F(table.steps, 2, 2, flags=3) == 2 and table.F(table.steps, 0, 0, flags=0) == 1
    assert N == 3


def test_enumerate_classes_single_item():
    c = TwoTermConstraint(0.1, 0.1, [0.5], [0.2])
    classes = enumerate_classes(c)
    assert len(classes) == 1 and classes[0][1] == 1
    assert empty_set_feasible(c)
    assert discretized_total(c) == 2


def test_enumerate_classes_merges_duplicates():
    c = TwoTermConstraint(0.05, 0.05, [0.3, 0.3, 0.1], [0.2, 0.2, 0.0])
    classes = enumerate_classes(c)
    keys = [k for k, _ in classes]
    assert len({(k.W1, k.W2) for k in keys}) == len(keys)
    dup = next(k for k in keys if k.W1 == 0.3 and k.W2 == 0.5)
    assert dup.R1 == dup.R2 == (0, 1)


def test_sampler_single_member():
    c = TwoTermConstraint(0.9, 0.05, [5.0, 5.0], [0.0, 0.0])
    assert discretized_total(c) == 1
    assert sample_discretized(c, 3) == frozenset()
    assert set(sample_discretized(c, 3, size=20)) == {frozenset()}


def test_sampler_vacuous_uniform():
    c = TwoTermConstraint(0.0, 0.0, [0.3, 0.6, 0.9], [0.0, 0.0, 0.0])
    draws = sample_discretized(c, 11, size=100_000)
    counts = {}
    for s in draws:
        counts[s] = counts.get(s, 0) + 1
    assert len(counts) == 8
    assert chisquare(list(counts.values())).pvalue > 1e-3


def test_sampler_empty_family():
    c = TwoTermConstraint(0.8, 0.8, [1.0], [0.0])
    with pytest.raises(ValueError):
        sample_discretized(c, 0)


@pytest.mark.parametrize("seed", range(3))
def test_sampler_matches_bruteforce(seed):
    rng = random.Random(100 + seed)
    c = random_constraint(rng, 8)
    sols = [int(m) for m in enumerate_discretized_solutions(c)]
    if len(sols) < 2:
        pytest.skip("degenerate draw")
    eng = Engine(c.x, c.z, TwoTermLayers([c.log_A], c.log_B))
    _, masks = eng.draw({0: 50_000}, 0, seed, with_masks=True)[0]
    idx = {m: i for i, m in enumerate(sols)}
    counts = np.zeros(len(sols))
    for m in masks:
        counts[idx[int(m)]] += 1
    assert chisquare(counts).pvalue > 1e-3


def test_estimate_count_exact_family():
    c = TwoTermConstraint(0.0, 0.0, [0.5] * 5, [0.0] * 5)
    est = estimate_count(c, 0.2, 0.1, 5)
    assert est.value == 32 and est.hits == est.samples
    assert est.samples == math.ceil(3 * 36 * math.log(2 / 0.1) / 0.04)


def test_estimate_count_empty():
    c = TwoTermConstraint(0.7, 0.7, [1.0, 2.0], [0.0, 0.0])
    est = estimate_count(c, 0.2, 0.1, 5)
    assert est.value == 0 and est.discretized_total == 0


def test_estimate_count_rejects_bad_params():
    c = TwoTermConstraint(0.1, 0.1, [1.0], [0.0])
    with pytest.raises(ValueError):
        estimate_count(c, 1.0, 0.1)


@pytest.mark.parametrize("seed", range(4))
def test_estimate_count_accuracy(seed):
    rng = random.Random(seed)
    c = layer_constraint(rng, 10)
    truth = len(enumerate_twoterm_solutions(c))
    est = estimate_count(c, 0.2, 0.1, seed, budget="adaptive")
    assert abs(est.value - truth) <= 0.2 * truth


def test_count_knapsack_examples():
    assert count_knapsack([1, 2, 3], 6, 0.1, 0.1, 0).value == 8
    assert count_knapsack([1, 2, 3], 100, 0.1, 0.1, 0).value == 8
    assert count_knapsack([1, 2, 3], 0.5, 0.1, 0.1, 0).value == 1
    assert count_knapsack([1, 2, 3], -1, 0.1, 0.1, 0).value == 0
    est = count_knapsack([1, 2, 3], 3, 0.1, 0.1, 0)
    assert abs(est.value - 5) <= 0.5


def test_count_knapsack_grouped_examples():
    inf = math.inf
    assert count_knapsack_grouped([1, 1, 1, 1], inf, [[0, 1, 2, 3]], [2], 0.1, 0.1, 0).value == 6
    assert count_knapsack_grouped([1, 2, 3], 0, [[0], [1, 2]], [0, 0], 0.1, 0.1, 0).value == 1
    assert count_knapsack_grouped([1, 2, 3], -1, [[0], [1, 2]], [0, 0], 0.1, 0.1, 0).value == 0
    est = count_knapsack_grouped([1, 1, 2, 2], 3, [[0, 1], [2, 3]], [1, 1], 0.1, 0.1, 0)
    assert est.value == 4
    assert count_knapsack_grouped([1, 1], 2 - 1e-9, [[0, 1]], [2], 0.1, 0.1, 0).value == 0
    with pytest.raises(ValueError):
        count_knapsack_grouped([1, 1], 3, [[0, 1]], [3], 0.1, 0.1, 0)
    with pytest.raises(ValueError):
        count_knapsack_grouped([1, 1], 3, [[0]], [1], 0.1, 0.1, 0)


@pytest.mark.parametrize("seed", range(3))
def test_count_knapsack_grouped_accuracy(seed):
    rng = random.Random(seed)
    n = 10
    w = [rng.uniform(0, 3) for _ in range(n)]
    blocks = [list(range(0, 4)), list(range(4, n))]
    r = [2, 3]
    cap = 5.0
    truth = sum(
        1
        for a in combinations(blocks[0], 2)
        for b in combinations(blocks[1], 3)
        if sum(w[i] for i in a + b) <= cap
    )
    est = count_knapsack_grouped(w, cap, blocks, r, 0.1, 0.05, seed)
    assert abs(est.value - truth) <= 0.1 * truth


def test_knapsack_agrees_with_twoterm_b_zero():
    rng = random.Random(9)
    w = [rng.uniform(0, 1) for _ in range(10)]
    cap = 2.0
    kn = count_knapsack(w, cap, 0.1, 0.05, 1)
    c = TwoTermConstraint(math.exp(-cap), 0.0, w, [-v for v in w])
    tt = estimate_count(c, 0.1, 0.05, 2)
    truth = sum(1 for m in range(1 << 10) if math.fsum(w[i] for i in range(10) if m >> i & 1) <= cap)
    assert abs(kn.value - truth) <= 0.1 * truth
    assert abs(tt.value - truth) <= 0.1 * truth


def test_engine_thread_count_does_not_change_results():
    rng = random.Random(4)
    c = random_constraint(rng, 12)
    lay = TwoTermLayers([c.log_A, c.log_A + 0.5], c.log_B)
    a = Engine(c.x, c.z, lay, threads=1).estimate([0, 1], 0.2, 0.1, 77)
    b = Engine(c.x, c.z, lay, threads=3).estimate([0, 1], 0.2, 0.1, 77)
    assert a == b


def test_layers_must_be_nested():
    with pytest.raises(ValueError):
        TwoTermLayers([0.0, -1.0], 0.0)
    with pytest.raises(ValueError):
        KnapsackLayers(np.array([[0.0], [-1.0]]))


def test_auto_grid_keeps_paper_constant_small_n():
    c = random_constraint(random.Random(1), 12)
    eng = Engine(c.x, c.z, TwoTermLayers([c.log_A], c.log_B), grid_factor="auto")
    assert eng.grid_factor == 10


# -- invariants ----------------------------------------------------------------


@st.composite
def constraints(draw, max_n=10):
    seed = draw(st.integers(0, 2**32))
    n = draw(st.integers(1, max_n))
    dup = draw(st.integers(0, n // 3))
    rng = random.Random(seed)
    if draw(st.booleans()):
        c = layer_constraint(rng, n)
        if c is not None:
            return c
    return random_constraint(rng, n, dup=dup)


@settings(max_examples=40, deadline=None)
@given(constraints())
def test_discretization_sound_and_bounded(c):
    truth = enumerate_twoterm_solutions(c)
    rounded = {int(m) for m in enumerate_discretized_solutions(c)}
    assert {int(m) for m in truth.masks} <= rounded
    if len(truth):
        assert len(rounded) <= (c.n + 1) ** 2 * len(truth)


@settings(max_examples=40, deadline=None)
@given(constraints())
def test_dp_total_matches_bruteforce(c):
    brute = len(enumerate_discretized_solutions(c))
    assert discretized_total(c) == brute
    classes = enumerate_classes(c)
    assert sum(N for _, N in classes) + int(empty_set_feasible(c)) == brute
