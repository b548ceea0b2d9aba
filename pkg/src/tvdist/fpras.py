"""Randomized (1 +- eps) estimators of TV distance between Bernoulli products.

Every outcome x contributes max(0, P(x) - Q(x)).  Contributions are bucketed
geometrically: t_j counts outcomes whose contribution is at least
m * (1+eps0)^j, and TV is recovered (up to a factor 1+eps0) as a weighted
sum of the t_j.  Each t_j is the solution count of a monotone constraint in
the complement of x, estimated by the counting engine in ``twoterm``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np

from .instances import (
    EstimatorParams,
    HalfcaseReport,
    ProductDistribution,
    TvInstance,
    flip_coordinates,
    ln_fraction,
    normalize,
    validate_halfcase,
)
from .twoterm import (
    CountEstimate,
    Engine,
    KnapsackLayers,
    TwoTermConstraint,
    TwoTermLayers,
    group_strides,
)

__all__ = [
    "PreconditionError",
    "MethodInapplicable",
    "LayerScheme",
    "LayerReport",
    "TvEstimate",
    "contribution_bounds",
    "build_layer_constraint",
    "recombine",
    "estimate_tv_halfcase",
    "estimate_tv_uniform",
    "estimate_tv_distinct_q",
    "DISTINCT_Q_CAP",
]

DISTINCT_Q_CAP = 3
HALF = Fraction(1, 2)


class PreconditionError(ValueError):
    def __init__(self, report: HalfcaseReport):
        self.report = report
        bad = ", ".join(f"{v.index} ({v.reason})" for v in report.violations)
        super().__init__(f"half-case preconditions violated at coordinates {bad}")


class MethodInapplicable(ValueError):
    pass


@dataclass(frozen=True)
class LayerScheme:
    m: Fraction
    M: Fraction
    U: Fraction
    u: int
    eps0: Fraction
    m_formula: Fraction | None = None
    tail_floor: Fraction | None = None

    def threshold(self, j: int) -> Fraction:
        return (1 + self.eps0) ** j

    def ln_thresholds(self) -> np.ndarray:
        """ln(m * (1+eps0)^j) for j = 0..u-1, nondecreasing."""
        base = ln_fraction(self.m)
        step = ln_fraction(1 + self.eps0)
        return base + np.arange(self.u, dtype=np.float64) * step

    def to_json(self) -> dict[str, Any]:
        return {
            "m": str(self.m),
            "m_formula": None if self.m_formula is None else str(self.m_formula),
            "tail_floor": None if self.tail_floor is None else str(self.tail_floor),
            "U_log": ln_fraction(self.U) if self.U > 0 else None,
            "u": self.u,
            "eps0": str(self.eps0),
        }


@dataclass(frozen=True)
class LayerReport:
    j: int
    threshold: float
    constraint: TwoTermConstraint | None
    t_hat: CountEstimate

    def to_json(self) -> dict[str, Any]:
        d = {"j": self.j, "threshold": self.threshold}
        d.update(self.t_hat.to_json())
        return d


@dataclass
class TvEstimate:
    value: float
    epsilon: Fraction
    delta: Fraction
    layers: list[LayerReport] = field(default_factory=list)
    seed: int = 0
    wall_time: float = 0.0
    method: str = ""
    scheme: LayerScheme | None = None
    grid_factor: float | None = None
    dropped: int = 0

    def to_json(self, include_layers: bool = True) -> dict[str, Any]:
        d: dict[str, Any] = {
            "value": self.value,
            "epsilon": str(self.epsilon),
            "delta": str(self.delta),
            "method": self.method,
            "seed": self.seed,
            "dropped": self.dropped,
            "grid_factor": self.grid_factor,
            "scheme": None if self.scheme is None else self.scheme.to_json(),
        }
        if include_layers:
            d["layers"] = [r.to_json() for r in self.layers if r.t_hat.discretized_total > 0]
        return d


def _prod(vals) -> Fraction:
    out = Fraction(1)
    for v in vals:
        out *= v
    return out


def _smallest_u(U: Fraction, eps0: Fraction) -> int:
    if U <= 1:
        return 0
    guess = max(0, math.ceil(ln_fraction(U) / ln_fraction(1 + eps0)) - 2)
    base = 1 + eps0
    while base**guess >= U and guess > 0:
        guess -= 1
    while base**guess < U:
        guess += 1
    return guess


def contribution_bounds(
    inst: TvInstance,
    eps0: Fraction | float = Fraction(1, 30),
    tail_epsilon: Fraction | float | None = None,
    free: int | None = None,
) -> LayerScheme:
    """Layering parameters for a normalized instance.

    m is min_i (p_i - q_i) * min(prod_{j!=i} p_j, prod_{j!=i} q_j) when q <= p
    coordinatewise.  That value is not a lower bound on every nonzero
    contribution in general, so with ``tail_epsilon`` set m is additionally
    clamped to tail_epsilon * max_i |p_i - q_i| / 2^free: all contributions
    below it sum to at most tail_epsilon * TV, since there are at most 2^free
    of them and TV is at least the largest marginal gap.
    """
    if inst.n == 0:
        raise ValueError("empty instance: TV is 0")
    eps0 = Fraction(eps0).limit_denominator(10**12) if isinstance(eps0, float) else Fraction(eps0)
    p, q = list(inst.p), list(inst.q)
    m_formula = None
    if all(b <= a for a, b in zip(p, q)):
        cands = []
        for i in range(inst.n):
            gap = p[i] - q[i]
            if gap == 0:
                continue
            rest_p = _prod(p[:i] + p[i + 1 :])
            rest_q = _prod(q[:i] + q[i + 1 :])
            cands.append(gap * min(rest_p, rest_q))
        positive = [c for c in cands if c > 0]
        m_formula = min(positive) if positive else None
    tail = None
    if tail_epsilon is not None:
        g = max(abs(a - b) for a, b in zip(p, q))
        nf = inst.n if free is None else free
        tail = Fraction(tail_epsilon) * g / 2**nf
    options = [v for v in (m_formula, tail) if v is not None and v > 0]
    if not options:
        raise ValueError("no positive contribution bound available")
    m = min(options)
    M = Fraction(1)
    U = M / m
    return LayerScheme(m, M, U, _smallest_u(U, eps0), eps0, m_formula, tail)


def recombine(m: Fraction | float, eps0: Fraction | float, t: Sequence[float]) -> float:
    """m * [(1+eps0) t_0 + sum_{j>=1} t_j ((1+eps0)^{j+1} - (1+eps0)^j)]."""
    if not len(t):
        return 0.0
    lm = ln_fraction(Fraction(m)) if isinstance(m, Fraction) else math.log(m)
    e = float(eps0)
    l1 = math.log1p(e)
    terms = [t[0] * math.exp(lm + l1)]
    for j in range(1, len(t)):
        if t[j]:
            terms.append(t[j] * e * math.exp(lm + j * l1))
    return math.fsum(terms)


def _tv_logs(p: Sequence[Fraction], q: Sequence[Fraction]):
    x = [ln_fraction(a / (1 - a)) for a in p]
    y = [ln_fraction((1 - b) / b) for b in q]
    z = [ln_fraction(a * (1 - b) / ((1 - a) * b)) for a, b in zip(p, q)]
    return x, y, z


def build_layer_constraint(inst: TvInstance, j: int, scheme: LayerScheme) -> TwoTermConstraint:
    """Complement-form constraint whose solutions T are the complements of the
    outcomes S with P(S) - Q(S) >= m (1+eps0)^j (half-case instances)."""
    if not 0 <= j < max(scheme.u, 1):
        raise ValueError(f"layer {j} outside [0, {scheme.u})")
    p, q = list(inst.p), list(inst.q)
    x, y, z = _tv_logs(p, q)
    lp = ln_fraction(_prod(p))
    log_A = float(scheme.ln_thresholds()[j]) - lp if scheme.u else ln_fraction(scheme.m) - lp
    log_B = ln_fraction(_prod(q)) - lp
    return TwoTermConstraint(math.exp(log_A), math.exp(log_B), x, y, z=z, log_A=log_A, log_B=log_B)


class _ExactCheck:
    """Exact test of P(S) - Q(S) >= m (1+eps0)^j for S given by its complement."""

    def __init__(self, p, q, scheme: LayerScheme, free: Sequence[int], forced: Sequence[int]):
        self.p, self.q = list(p), list(q)
        self.scheme = scheme
        self.free = list(free)
        self.forced = set(forced)
        self._theta: dict[int, Fraction] = {}

    def __call__(self, j: int, tmask: int) -> bool:
        th = self._theta.get(j)
        if th is None:
            th = self._theta[j] = self.scheme.m * self.scheme.threshold(j)
        T = {self.free[i] for i in range(len(self.free)) if tmask >> i & 1}
        P = Fraction(1)
        Q = Fraction(1)
        for i, (a, b) in enumerate(zip(self.p, self.q)):
            if i in T:
                P *= 1 - a
                Q *= 1 - b
            else:
                P *= a
                Q *= b
        return P - Q >= th


def _params(params: EstimatorParams):
    eps = params.epsilon
    return eps, eps / 3, params.delta


def _run(
    engine: Engine,
    scheme: LayerScheme,
    params: EstimatorParams,
    budget: str,
    method: str,
    t0: float,
    dropped: int,
    constraint_of: Callable[[int], TwoTermConstraint | None] | None = None,
) -> TvEstimate:
    eps, eps3, delta = _params(params)
    u = scheme.u
    per_layer_delta = float(delta) / max(u, 1)
    res = engine.estimate(range(u), float(eps3), per_layer_delta, params.seed, budget=budget)
    t = [res[j].value for j in range(u)]
    value = recombine(scheme.m, scheme.eps0, t)
    reports = [
        LayerReport(
            j,
            math.exp(j * ln_fraction(1 + scheme.eps0)),
            constraint_of(j) if constraint_of is not None else None,
            res[j],
        )
        for j in range(u)
    ]
    return TvEstimate(
        value, eps, delta, reports, params.seed, time.perf_counter() - t0, method, scheme,
        engine.grid_factor, dropped,
    )


def _empty(params: EstimatorParams, method: str, t0: float, dropped: int, value: float = 0.0) -> TvEstimate:
    return TvEstimate(value, params.epsilon, params.delta, [], params.seed, time.perf_counter() - t0,
                      method, None, None, dropped)


def estimate_tv_halfcase(
    inst: TvInstance,
    params: EstimatorParams,
    *,
    budget: str = "adaptive",
    grid_factor: float | str = "auto",
    threads: int | None = None,
    backend: str | None = None,
) -> TvEstimate:
    """(1 +- eps) estimate of TV(P, Q) for 1/2 <= p_i < 1, 0 < q_i <= p_i."""
    t0 = time.perf_counter()
    norm, dropped = normalize(inst)
    report = validate_halfcase(inst)
    if not report.ok:
        raise PreconditionError(report)
    if norm.n == 0:
        return _empty(params, "half", t0, dropped)
    eps, eps3, _ = _params(params)
    scheme = contribution_bounds(norm, eps3, tail_epsilon=eps3)
    p, q = list(norm.p), list(norm.q)
    x, _, z = _tv_logs(p, q)
    lp = ln_fraction(_prod(p))
    lnA = scheme.ln_thresholds() - lp
    lnB = ln_fraction(_prod(q)) - lp
    check = _ExactCheck(p, q, scheme, range(norm.n), ())
    eng = Engine(x, z, TwoTermLayers(lnA, lnB), grid_factor=grid_factor, exact=check,
                 threads=threads, backend=backend)
    xs, ys = tuple(x), tuple(_tv_logs(p, q)[1])

    def constraint_of(j: int) -> TwoTermConstraint:
        la = float(lnA[j])
        return TwoTermConstraint(math.exp(la), math.exp(lnB), xs, ys, z=z, log_A=la, log_B=lnB)

    return _run(eng, scheme, params, budget, "half", t0, dropped, constraint_of)


def _logaddexp(a: np.ndarray | float, b: np.ndarray | float):
    with np.errstate(invalid="ignore"):
        return np.logaddexp(a, b)


def _ln_or_ninf(v: Fraction) -> float:
    return ln_fraction(v) if v > 0 else -math.inf


def estimate_tv_uniform(
    p: ProductDistribution,
    params: EstimatorParams,
    *,
    budget: str = "adaptive",
    grid_factor: float | str = "auto",
    threads: int | None = None,
    backend: str | None = None,
) -> TvEstimate:
    """(1 +- eps) estimate of TV(P, uniform) for arbitrary marginals p."""
    t0 = time.perf_counter()
    p = p if isinstance(p, ProductDistribution) else ProductDistribution(p)
    inst = TvInstance(p, ProductDistribution([HALF] * p.n))
    inst = flip_coordinates(inst, [i for i, v in enumerate(p) if v < HALF])
    norm, dropped = normalize(inst)
    if norm.n == 0:
        return _empty(params, "uniform", t0, dropped)
    pp = list(norm.p)
    forced = [i for i, v in enumerate(pp) if v == 1]
    free = [i for i, v in enumerate(pp) if v < 1]
    if not free:
        return _empty(params, "uniform", t0, dropped, float(1 - HALF ** len(forced)))
    eps, eps3, _ = _params(params)
    scheme = contribution_bounds(norm, eps3, tail_epsilon=eps3, free=len(free))
    pf = [pp[i] for i in free]
    x = [ln_fraction(a / (1 - a)) for a in pf]
    lp = ln_fraction(_prod(pf))
    lnQ = -norm.n * math.log(2.0)
    lnA = _logaddexp(scheme.ln_thresholds(), lnQ) - lp
    check = _ExactCheck(pp, list(norm.q), scheme, free, forced)
    eng = Engine(x, np.zeros(len(x)), KnapsackLayers(lnA), grid_factor=grid_factor, exact=check,
                 threads=threads, backend=backend)
    return _run(eng, scheme, params, budget, "uniform", t0, dropped)


def distinct_q_values(inst: TvInstance) -> list[Fraction]:
    norm, _ = normalize(inst)
    return sorted(set(norm.q))


def estimate_tv_distinct_q(
    inst: TvInstance,
    params: EstimatorParams,
    *,
    k_cap: int = DISTINCT_Q_CAP,
    budget: str = "adaptive",
    grid_factor: float | str = "auto",
    threads: int | None = None,
    backend: str | None = None,
) -> TvEstimate:
    """(1 +- eps) estimate of TV(P, Q) when Q has at most ``k_cap`` distinct marginals."""
    t0 = time.perf_counter()
    norm, dropped = normalize(inst)
    k = len(set(norm.q))
    if k > k_cap:
        raise MethodInapplicable(f"{k} distinct q values exceed the cap {k_cap}")
    if norm.n == 0:
        return _empty(params, "distinct-q", t0, dropped)
    norm = flip_coordinates(norm, [i for i, v in enumerate(norm.p) if v < HALF])
    pp, qq = list(norm.p), list(norm.q)
    forced = [i for i, v in enumerate(pp) if v == 1]
    free = [i for i, v in enumerate(pp) if v < 1]
    q_forced = _prod(qq[i] for i in forced)
    if not free:
        return _empty(params, "distinct-q", t0, dropped, float(1 - q_forced))
    eps, eps3, _ = _params(params)
    scheme = contribution_bounds(norm, eps3, tail_epsilon=eps3, free=len(free))
    pf = [pp[i] for i in free]
    qf = [qq[i] for i in free]
    levels = sorted(set(qf))
    sizes = [sum(1 for v in qf if v == a) for a in levels]
    strides = group_strides(sizes)
    zgrid = np.array([strides[levels.index(v)] for v in qf], dtype=np.int64)
    H = strides[-1] * (sizes[-1] + 1)
    # ln Q(S) for complements T with h_g members of group g
    lnq = np.zeros(H)
    lq_forced = _ln_or_ninf(q_forced)
    for h in range(H):
        tot = lq_forced
        rem = h
        for g in range(len(levels) - 1, -1, -1):
            hg, rem = divmod(rem, strides[g])
            if hg > sizes[g]:
                tot = math.nan
                break
            a = levels[g]
            for cnt, val in ((sizes[g] - hg, a), (hg, 1 - a)):
                if cnt:
                    tot += cnt * _ln_or_ninf(val)
        lnq[h] = tot
    x = [ln_fraction(a / (1 - a)) for a in pf]
    lp = ln_fraction(_prod(pf))
    th = scheme.ln_thresholds()
    lnA = _logaddexp(th[:, None], lnq[None, :]) - lp
    lnA[:, np.isnan(lnq)] = math.inf
    check = _ExactCheck(pp, qq, scheme, free, forced)
    eng = Engine(x, zgrid.astype(np.float64), KnapsackLayers(lnA), zgrid=zgrid, grid_factor=grid_factor,
                 exact=check, threads=threads, backend=backend)
    return _run(eng, scheme, params, budget, "distinct-q", t0, dropped)
