"""Hardness gadgets: #SubsetSum -> #PMFEquals -> exact TV distance.

Everything here is exact rational arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import lcm
from typing import Any, Sequence

from .instances import ProductDistribution, TvInstance, format_rational
from .oracle import DEFAULT_CAP, SubsetSumInstance, pmf_table

__all__ = [
    "ReductionBundle",
    "RecoveryError",
    "subset_sum_to_pmf_equals",
    "choose_beta",
    "pmf_equals_to_tv_instances",
    "recover_count",
    "recover_from_oracle",
]

HALF = Fraction(1, 2)
SMALL_V = "small-v"
LARGE_V = "large-v"


class RecoveryError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ReductionBundle:
    phat: ProductDistribution
    qhat: ProductDistribution
    pprime: ProductDistribution
    qprime: ProductDistribution
    beta: Fraction
    case: str
    v: Fraction

    @property
    def hat(self) -> TvInstance:
        return TvInstance(self.phat, self.qhat)

    @property
    def prime(self) -> TvInstance:
        return TvInstance(self.pprime, self.qprime)

    @property
    def n(self) -> int:
        return self.phat.n - 1

    def metadata(self) -> dict[str, Any]:
        return {"case": self.case, "beta": format_rational(self.beta), "v": format_rational(self.v)}


def subset_sum_to_pmf_equals(inst: SubsetSumInstance) -> tuple[ProductDistribution, Fraction]:
    """p_i = 2^a_i / (1 + 2^a_i), v = 2^T * prod(1 - p_i).

    Then P(x_S) = v exactly when the weights in S sum to T.
    """
    p = []
    prod_q = Fraction(1)
    for a in inst.weights:
        w = Fraction(2) ** a
        p.append(w / (1 + w))
        prod_q *= 1 / (1 + w)
    return ProductDistribution(p), Fraction(2) ** inst.target * prod_q


def _beta_ok(P: Fraction, v: Fraction, beta: Fraction) -> bool:
    if P < v:
        return P * (HALF + beta) < v * (HALF - beta)
    if P > v:
        return P * (HALF - beta) > v * (HALF + beta)
    return True


def choose_beta(
    p: ProductDistribution | Sequence[Fraction],
    v: Fraction,
    method: str = "exact",
    cap: int = DEFAULT_CAP,
) -> Fraction:
    """A beta in (0, 1/2) separating every P(x) != v from v after the +-beta tilt.

    ``exact`` uses half of the tightest admissible value over all 2^n
    outcomes; ``precision`` uses 2^(-100 b) with b the bit length of a common
    denominator of the pmf values and v, and needs no enumeration.
    """
    v = Fraction(v)
    marg = list(p.marginals if isinstance(p, ProductDistribution) else p)
    if method == "precision":
        den = 1
        for a in marg:
            den *= a.denominator
        bits = lcm(den, v.denominator).bit_length()
        return Fraction(1, 2 ** (100 * bits))
    if method != "exact":
        raise ValueError(f"unknown beta method {method!r}")
    best = None
    for P in pmf_table(marg, cap):
        if P == v:
            continue
        r = abs(v - P) / (v + P)
        if best is None or r < best:
            best = r
    if best is None:
        return Fraction(1, 4)
    return best / 4


def pmf_equals_to_tv_instances(
    p: ProductDistribution | Sequence[Fraction],
    v: Fraction,
    beta: Fraction | None = None,
    method: str = "exact",
) -> ReductionBundle:
    p = p if isinstance(p, ProductDistribution) else ProductDistribution(p)
    v = Fraction(v)
    if v <= 0:
        raise ValueError("v must be positive")
    n = p.n
    if beta is None:
        beta = choose_beta(p, v, method)
    tail_p, tail_q = HALF + beta, HALF - beta
    scale = v * 2**n
    if scale < 1:
        case = SMALL_V
        hp, hq = list(p) + [Fraction(1)], [HALF] * n + [scale]
    else:
        case = LARGE_V
        hp, hq = list(p) + [1 / scale], [HALF] * n + [Fraction(1)]
    return ReductionBundle(
        ProductDistribution(hp),
        ProductDistribution(hq),
        ProductDistribution(hp + [tail_p]),
        ProductDistribution(hq + [tail_q]),
        Fraction(beta),
        case,
        v,
    )


def recover_count(
    bundle: ReductionBundle,
    tv_prime: Fraction,
    tv_hat: Fraction,
    p: ProductDistribution | Sequence[Fraction] | None = None,
    v: Fraction | None = None,
) -> int:
    """#{x : P(x) = v} from the two exact TV distances of the bundle."""
    v = bundle.v if v is None else Fraction(v)
    n = bundle.n if p is None else len(p)
    diff = Fraction(tv_prime) - Fraction(tv_hat)
    if bundle.case == SMALL_V:
        c = diff / (2 * bundle.beta * v)
    else:
        c = diff * 2 ** (n - 1) / bundle.beta
    if c.denominator != 1 or c < 0:
        raise RecoveryError(f"recovered count {c} is not a nonnegative integer")
    return c.numerator


def recover_from_oracle(bundle: ReductionBundle, cap: int = DEFAULT_CAP) -> int:
    from .oracle import exact_tv

    return recover_count(bundle, exact_tv(bundle.prime, cap), exact_tv(bundle.hat, cap))
