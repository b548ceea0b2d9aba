"""Relative-error Monte Carlo estimation of 0/1 hit ratios, driven in rounds.

Estimators never draw samples themselves: each round they post a request
(how many fresh i.i.d. indicator draws they need) and are fed the results in
draw order.  This lets the caller batch the draws of many estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = [
    "chernoff_samples",
    "FixedEstimator",
    "OptimalEstimator",
    "RatioResult",
    "run_rounds",
]

_LAMBDA = 4.0 * (math.e - 2.0)


def chernoff_samples(ratio_bound: float, epsilon: float, delta: float) -> int:
    """t = ceil(3 * ratio_bound * ln(2/delta) / epsilon^2)."""
    return math.ceil(3.0 * ratio_bound * math.log(2.0 / delta) / (epsilon * epsilon))


@dataclass(frozen=True)
class RatioResult:
    mu: float
    hits: int  # hits in the final estimation phase
    samples: int  # samples in the final estimation phase
    draws: int  # all indicator draws consumed


class FixedEstimator:
    """Mean of a fixed number of draws."""

    def __init__(self, samples: int):
        self.samples = int(samples)
        self.result: RatioResult | None = None

    @property
    def done(self) -> bool:
        return self.result is not None

    def request(self) -> int:
        return self.samples

    def feed(self, z: np.ndarray) -> None:
        hits = int(np.count_nonzero(z))
        self.result = RatioResult(hits / self.samples, hits, self.samples, self.samples)


class OptimalEstimator:
    """Dagum-Karp-Luby-Ross approximation algorithm for [0,1] variables.

    Three phases: a stopping-rule pilot at accuracy min(1/2, sqrt(eps)), a
    variance estimate from paired draws, then a final run sized by the
    estimated variance.  Output is within (1 +- eps) of the mean with
    probability at least 1 - delta.

    With ``floor_mu > 0`` the mean is promised to be either 0 or at least
    ``floor_mu``.  A pilot that sees no hit in ln(10/delta)/floor_mu draws
    then stops with 0; that test takes delta/10 of the failure budget.
    """

    def __init__(self, epsilon: float, delta: float, floor_mu: float = 0.0):
        if not (0 < epsilon <= 1 and 0 < delta <= 1):
            raise ValueError("need 0 < epsilon <= 1 and 0 < delta <= 1")
        self.eps = epsilon
        self.floor_mu = floor_mu
        self.zero_after: int | None = None
        if floor_mu > 0:
            self.zero_after = math.ceil(math.log(10.0 / delta) / min(floor_mu, 1.0))
            delta = 0.9 * delta
        self.delta = delta
        ups = _LAMBDA * math.log(2.0 / delta) / (epsilon * epsilon)
        self.ups2 = (
            2.0
            * (1.0 + math.sqrt(epsilon))
            * (1.0 + 2.0 * math.sqrt(epsilon))
            * (1.0 + math.log(1.5) / math.log(2.0 / delta))
            * ups
        )
        e1 = min(0.5, math.sqrt(epsilon))
        self.ups1 = 1.0 + (1.0 + e1) * _LAMBDA * math.log(2.0 / (delta / 3.0)) / (e1 * e1)
        self.need1 = math.ceil(self.ups1)
        self.phase = 1
        self.n1 = 0
        self.s1 = 0
        self.mu_hat = 0.0
        self.n2 = 0
        self.n3 = 0
        self.draws = 0
        self.result: RatioResult | None = None

    @property
    def done(self) -> bool:
        return self.result is not None

    def request(self) -> int:
        if self.phase == 1:
            left = self.need1 - self.s1
            if self.n1 == 0:
                want = left + 8
            else:
                guess = max(self.s1 / self.n1, self.floor_mu, 1e-12)
                want = min(int(math.ceil(1.1 * left / guess)) + 16, 1 << 40)
            if self.s1 == 0 and self.zero_after is not None:
                want = min(want, self.zero_after - self.n1)
            return want
        if self.phase == 2:
            return 2 * self.n2
        return self.n3

    def feed(self, z: np.ndarray) -> None:
        z = np.asarray(z, dtype=np.int64)
        if self.phase == 1:
            cs = np.cumsum(z)
            left = self.need1 - self.s1
            idx = int(np.searchsorted(cs, left, side="left"))
            if idx < len(z):
                self.n1 += idx + 1
                self.s1 += int(cs[idx])
                self.draws += len(z)
                self.mu_hat = self.ups1 / self.n1
                self.n2 = math.ceil(self.ups2 * self.eps / self.mu_hat)
                self.phase = 2
            else:
                self.n1 += len(z)
                self.s1 += int(cs[-1]) if len(z) else 0
                self.draws += len(z)
                if self.s1 == 0 and self.zero_after is not None and self.n1 >= self.zero_after:
                    self.result = RatioResult(0.0, 0, self.n1, self.draws)
            return
        self.draws += len(z)
        if self.phase == 2:
            s = float(np.count_nonzero(z[0::2] != z[1::2])) / 2.0
            rho = max(s / self.n2, self.eps * self.mu_hat)
            self.n3 = math.ceil(self.ups2 * rho / (self.mu_hat * self.mu_hat))
            self.phase = 3
            return
        hits = int(np.count_nonzero(z))
        self.result = RatioResult(hits / self.n3, hits, self.n3, self.draws)


Estimator = FixedEstimator | OptimalEstimator


def run_rounds(
    estimators: Mapping[int, Estimator],
    draw: Callable[[dict[int, int], int], dict[int, np.ndarray]],
) -> dict[int, RatioResult]:
    """Drive all estimators to completion; ``draw(requests, round)`` supplies indicators."""
    rnd = 0
    while True:
        req = {j: e.request() for j, e in estimators.items() if not e.done}
        if not req:
            break
        got = draw(req, rnd)
        for j in req:
            estimators[j].feed(got[j])
        rnd += 1
    return {j: e.result for j, e in estimators.items()}  # type: ignore[misc]
