"""Exact brute-force references over all 2^n outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .instances import ProductDistribution, TvInstance
from .twoterm import GUARD, TwoTermConstraint, class_keys, discrete_ok, scale_weights

__all__ = [
    "CapExceeded",
    "SubsetSumInstance",
    "DEFAULT_CAP",
    "pmf_table",
    "exact_tv",
    "exact_tv_l1",
    "count_pmf_equals",
    "count_subset_sum",
    "TwoTermSolutions",
    "enumerate_twoterm_solutions",
    "enumerate_discretized_solutions",
    "layer_counts",
]

DEFAULT_CAP = 24
TWOTERM_CAP = 20


class CapExceeded(ValueError):
    pass


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise CapExceeded(f"n = {n} exceeds the enumeration cap {cap}")


@dataclass(frozen=True)
class SubsetSumInstance:
    weights: tuple[int, ...]
    target: int

    def __init__(self, weights: Sequence[int], target: int):
        w = tuple(int(a) for a in weights)
        if not w:
            raise ValueError("need at least one weight")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "target", int(target))


def _numerators(marg: Sequence[Fraction]) -> tuple[list[int], int]:
    """Integer numerators of the pmf over a common denominator, index = bit mask
    (bit i set means x_i = 1)."""
    den = 1
    for m in marg:
        den *= m.denominator
    nums = [1]
    for m in marg:
        d = m.denominator
        one, zero = m.numerator, d - m.numerator
        nums = [v * zero for v in nums] + [v * one for v in nums]
    # the numerators above are over prod(d_i); den equals that product
    return nums, den


def pmf_table(d: ProductDistribution | Sequence[Fraction], cap: int = DEFAULT_CAP) -> list[Fraction]:
    """P(x) for every mask x (bit i = coordinate i)."""
    marg = list(d.marginals if isinstance(d, ProductDistribution) else d)
    _check_cap(len(marg), cap)
    nums, den = _numerators(marg)
    return [Fraction(v, den) for v in nums]


def exact_tv(inst: TvInstance, cap: int = DEFAULT_CAP) -> Fraction:
    """sum_x max(0, P(x) - Q(x)), exactly."""
    _check_cap(inst.n, cap)
    pn, pd = _numerators(list(inst.p))
    qn, qd = _numerators(list(inst.q))
    if pd * qd < 2**62 and inst.n <= 22:
        a = np.array(pn, dtype=np.int64) * np.int64(qd)
        b = np.array(qn, dtype=np.int64) * np.int64(pd)
        diff = a - b
        tot = int(diff[diff > 0].astype(object).sum()) if np.any(diff > 0) else 0
    else:
        tot = sum(d for d in (x * qd - y * pd for x, y in zip(pn, qn)) if d > 0)
    return Fraction(tot, pd * qd)


def exact_tv_l1(inst: TvInstance, cap: int = DEFAULT_CAP) -> Fraction:
    """Half the L1 distance; must agree with exact_tv."""
    _check_cap(inst.n, cap)
    P = pmf_table(inst.p, cap)
    Q = pmf_table(inst.q, cap)
    return sum((abs(a - b) for a, b in zip(P, Q)), Fraction(0)) / 2


def count_pmf_equals(d: ProductDistribution | Sequence[Fraction], v: Fraction, cap: int = DEFAULT_CAP) -> int:
    marg = list(d.marginals if isinstance(d, ProductDistribution) else d)
    _check_cap(len(marg), cap)
    nums, den = _numerators(marg)
    v = Fraction(v)
    # P(x) = num/den == v  <=>  num * v.den == v.num * den
    lhs = v.numerator * den
    return sum(1 for x in nums if x * v.denominator == lhs)


def count_subset_sum(inst: SubsetSumInstance, cap: int = DEFAULT_CAP) -> int:
    _check_cap(len(inst.weights), cap)
    sums = [0]
    for a in inst.weights:
        sums = sums + [s + a for s in sums]
    return sum(1 for s in sums if s == inst.target)


def _subset_sums(w: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.zeros(1, dtype=dtype)
    for v in w:
        out = np.concatenate([out, out + dtype(v)])
    return out


@dataclass(frozen=True)
class TwoTermSolutions:
    n: int
    masks: np.ndarray  # decided members
    boundary: np.ndarray  # within the guard band of the threshold

    def as_sets(self) -> set[frozenset[int]]:
        return {frozenset(i for i in range(self.n) if int(m) >> i & 1) for m in self.masks}

    def boundary_sets(self) -> set[frozenset[int]]:
        return {frozenset(i for i in range(self.n) if int(m) >> i & 1) for m in self.boundary}

    def __len__(self) -> int:
        return len(self.masks)


def enumerate_twoterm_solutions(
    c: TwoTermConstraint, cap: int = TWOTERM_CAP, guard: float = GUARD
) -> TwoTermSolutions:
    """All S with A*exp(sum_S x) + B*exp(sum_S z) <= 1, in extended precision.

    Sets whose value lies within a relative ``guard`` of 1 are reported in
    ``boundary`` instead of ``masks``.
    """
    _check_cap(c.n, cap)
    ld = np.longdouble
    X = _subset_sums(np.array(c.x), ld)
    Z = _subset_sums(np.array(c.z), ld)
    la = ld(c.log_A) if c.log_A != -math.inf else None
    lb = ld(c.log_B) if c.log_B != -math.inf else None
    val = np.zeros(len(X), dtype=ld)
    with np.errstate(over="ignore"):
        if la is not None:
            val = val + np.exp(la + X)
        if lb is not None:
            val = val + np.exp(lb + Z)
    idx = np.arange(len(X), dtype=np.uint64)
    near = np.abs(val - 1) <= guard
    return TwoTermSolutions(c.n, idx[(val <= 1) & ~near], idx[near])


def enumerate_discretized_solutions(c: TwoTermConstraint, grid_factor: float = 10, cap: int = TWOTERM_CAP) -> np.ndarray:
    """Masks of the rounded family S', computed set by set from its own maxima."""
    _check_cap(c.n, cap)
    n = c.n
    x = np.array(c.x)
    z = np.array(c.z)
    K = grid_factor * max(n, 1)
    masks = np.arange(2**n, dtype=np.int64)
    W1 = np.full(2**n, -1.0)
    W2 = np.full(2**n, -1.0)
    for i in range(n):
        has = (masks >> i) & 1 == 1
        W1 = np.where(has, np.maximum(W1, x[i]), W1)
        W2 = np.where(has, np.maximum(W2, z[i]), W2)
    ok = np.zeros(2**n, dtype=bool)
    ok[0] = bool(discrete_ok(c.log_A, c.log_B, 0.0, 0.0, 0, 0))
    for w1 in np.unique(x):
        for w2 in np.unique(z):
            sel = (W1 == w1) & (W2 == w2)
            if not sel.any():
                continue
            xp = scale_weights(x, w1, K)
            zp = scale_weights(z, w2, K)
            s1 = _subset_sums(xp.astype(np.float64))
            s2 = _subset_sums(zp.astype(np.float64))
            a = w1 / K
            b = 0.0 if w2 == 0 else w2 / K
            ok[sel] = discrete_ok(c.log_A, c.log_B, a, b, s1[sel], s2[sel])
    return masks[ok]


def layer_counts(inst: TvInstance, thresholds: Sequence[Fraction], cap: int = DEFAULT_CAP) -> list[int]:
    """#{x : P(x) - Q(x) >= theta} for each theta (theta > 0)."""
    _check_cap(inst.n, cap)
    pn, pd = _numerators(list(inst.p))
    qn, qd = _numerators(list(inst.q))
    den = pd * qd
    diffs = sorted(a * qd - b * pd for a, b in zip(pn, qn))
    import bisect

    out = []
    for t in thresholds:
        t = Fraction(t)
        # diff/den >= t  <=>  diff * t.den >= t.num * den
        bound = t.numerator * den
        # smallest diff with diff * t.den >= bound
        lo = -(-bound // t.denominator)
        out.append(len(diffs) - bisect.bisect_left(diffs, lo))
    return out
