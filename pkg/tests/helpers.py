"""Random instance generators shared by the test modules."""

from __future__ import annotations

import random
from fractions import Fraction

from hypothesis import strategies as st

from tvdist.fpras import build_layer_constraint, contribution_bounds
from tvdist.instances import ProductDistribution, TvInstance, normalize
from tvdist.twoterm import TwoTermConstraint

HALF = Fraction(1, 2)


def halfcase_instance(rng: random.Random, n: int, den: int = 16) -> TvInstance:
    """p_i in [1/2, 15/16], 0 < q_i <= p_i, on a 1/den grid."""
    p, q = [], []
    for _ in range(n):
        a = Fraction(rng.randint(den // 2, den - den // 16), den)
        b = Fraction(rng.randint(1, int(a * den)), den)
        p.append(a)
        q.append(b)
    return TvInstance(ProductDistribution(p), ProductDistribution(q))


def fine_halfcase_instance(rng: random.Random, n: int) -> TvInstance:
    """Half-case instance with non-dyadic marginals (denominators up to 1000)."""
    p, q = [], []
    for _ in range(n):
        a = Fraction(rng.randint(500, 937), 1000)
        b = Fraction(rng.randint(1, int(a * 1000)), 1000)
        p.append(a)
        q.append(b)
    return TvInstance(ProductDistribution(p), ProductDistribution(q))


def layer_constraint(rng: random.Random, n: int, eps0=Fraction(1, 10)) -> TwoTermConstraint | None:
    """A random layer constraint of a random half-case instance (None if it normalizes away)."""
    inst, _ = normalize(fine_halfcase_instance(rng, n))
    if inst.n == 0:
        return None
    scheme = contribution_bounds(inst, eps0)
    return build_layer_constraint(inst, rng.randrange(max(scheme.u, 1)), scheme)


def random_constraint(rng: random.Random, n: int, dup: int = 0) -> TwoTermConstraint:
    """Generic constraint; ``dup`` extra items copy existing (x_i, y_i) tuples."""
    x = [rng.choice([0.0, rng.uniform(0, 2)]) if rng.random() < 0.1 else rng.uniform(0, 2) for _ in range(n - dup)]
    z = [rng.uniform(0, 3) for _ in range(n - dup)]
    for _ in range(dup):
        k = rng.randrange(len(x))
        x.append(x[k])
        z.append(z[k])
    y = [b - a for a, b in zip(x, z)]
    scale = sum(x) + sum(z)
    A = rng.uniform(0, 1) * pow(2.718281828, -rng.uniform(0, scale / 2))
    B = rng.uniform(0, 1 - A) * pow(2.718281828, -rng.uniform(0, scale / 2))
    return TwoTermConstraint(A, B, x, y, z=z)


def rationals(den_max: int = 16):
    """Exact rationals a/d in [0, 1] with d <= den_max."""

    @st.composite
    def _r(draw):
        d = draw(st.integers(1, den_max))
        a = draw(st.integers(0, d))
        return Fraction(a, d)

    return _r()


@st.composite
def tv_instances(draw, max_n: int = 8, den_max: int = 12):
    n = draw(st.integers(0, max_n))
    p = [draw(rationals(den_max)) for _ in range(n)]
    q = [draw(rationals(den_max)) for _ in range(n)]
    return TvInstance(ProductDistribution(p), ProductDistribution(q))
