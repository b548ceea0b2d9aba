"""Approximate counting of two-term exponential constraints.

A constraint is A*exp(sum_{i in S} x_i) + B*exp(sum_{i in S} z_i) <= 1 with
x_i, z_i >= 0, so its solution family is closed under taking subsets.  The
engine partitions candidate sets by their maxima (W1, W2) = (max x, max z),
rounds weights to an integer grid scaled by those maxima, counts the rounded
family exactly with a sparse DP, samples it uniformly by walking the DP
backwards, and estimates the true count from the hit ratio of samples that
also satisfy the unrounded constraint.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import _backend
from .montecarlo import FixedEstimator, OptimalEstimator, chernoff_samples, run_rounds

__all__ = [
    "GUARD",
    "DEFAULT_GRID",
    "TwoTermConstraint",
    "ClassKey",
    "DiscretizedWeights",
    "CountTable",
    "CountEstimate",
    "discrete_ok",
    "scale_weights",
    "class_keys",
    "discretize",
    "count_discretized",
    "enumerate_classes",
    "empty_set_feasible",
    "discretized_total",
    "sample_discretized",
    "estimate_count",
    "count_knapsack",
    "count_knapsack_grouped",
    "TwoTermLayers",
    "KnapsackLayers",
    "Engine",
]

GUARD = 2.0**-40
DEFAULT_GRID = 10
S1_SHIFT = 34
S2_MASK = 0xFFFFFFFF

# grid factors tried by the automatic resolution policy, finest first
AUTO_GRIDS = (10.0, 8.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.5, 1.0)
AUTO_BUDGET = 3e8  # estimated DP state-steps over all classes
RESIDENT_BUDGET = 4e7  # stored DP states kept between sampling rounds

_M64 = (1 << 64) - 1


def _mix(*parts: int) -> int:
    """Hash integers into a 64-bit stream seed (splitmix64 finalizer chain)."""
    h = 0x6A09E667F3BCC909
    for p in parts:
        h = (h ^ (int(p) & _M64)) & _M64
        h = (h + 0x9E3779B97F4A7C15) & _M64
        h = ((h ^ (h >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        h = ((h ^ (h >> 27)) * 0x94D049BB133111EB) & _M64
        h ^= h >> 31
    return h


def _seed_of(rng: Any) -> int:
    if rng is None:
        return int.from_bytes(os.urandom(8), "little")
    if isinstance(rng, (int, np.integer)):
        return int(rng) & _M64
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63)) * 2 + int(rng.integers(0, 2))
    raise TypeError(f"rng must be an int seed or numpy Generator, got {type(rng).__name__}")


def _ln(v: float) -> float:
    return math.log(v) if v > 0 else -math.inf


# ---------------------------------------------------------------------------
# Data types


@dataclass(frozen=True)
class TwoTermConstraint:
    """A*exp(sum_S x) + B*exp(sum_S (x + y)) <= 1.

    ``z`` may be given explicitly when x + y is known more accurately than the
    float sum; ``log_A``/``log_B`` likewise carry logs of constants that would
    under- or overflow as floats.
    """

    A: float
    B: float
    x: tuple[float, ...]
    y: tuple[float, ...]
    z: tuple[float, ...] | None = None
    log_A: float | None = None
    log_B: float | None = None

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        y = tuple(float(v) for v in self.y)
        if len(x) != len(y):
            raise ValueError("x and y must have equal length")
        z = tuple(float(v) for v in self.z) if self.z is not None else tuple(a + b for a, b in zip(x, y))
        if len(z) != len(x):
            raise ValueError("z must match x in length")
        if self.A < 0 or self.B < 0:
            raise ValueError("A and B must be nonnegative")
        if any(v < 0 for v in x) or any(v < 0 for v in z):
            raise ValueError("need x_i >= 0 and x_i + y_i >= 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "A", float(self.A))
        object.__setattr__(self, "B", float(self.B))
        if self.log_A is None:
            object.__setattr__(self, "log_A", _ln(self.A))
        if self.log_B is None:
            object.__setattr__(self, "log_B", _ln(self.B))

    @property
    def n(self) -> int:
        return len(self.x)

    def value(self, subset: Iterable[int]) -> float:
        s = sorted(subset)
        return math.exp(self.log_A + math.fsum(self.x[i] for i in s)) + math.exp(
            self.log_B + math.fsum(self.z[i] for i in s)
        )

    def exact_member(self, subset: Iterable[int], prec: int = 60) -> bool:
        """Membership decided in high-precision decimal arithmetic."""
        s = sorted(subset)
        with localcontext() as ctx:
            ctx.prec = prec
            tot = Decimal(0)
            for ln_c, w in ((self.log_A, self.x), (self.log_B, self.z)):
                if ln_c == -math.inf:
                    continue
                e = Decimal(ln_c) + sum((Decimal(w[i]) for i in s), Decimal(0))
                tot += e.exp()
            return tot <= 1


@dataclass(frozen=True)
class ClassKey:
    ell1: int
    ell: int
    W1: float
    W2: float
    Sigma: tuple[int, ...]
    R1: tuple[int, ...]
    R2: tuple[int, ...]


@dataclass(frozen=True)
class DiscretizedWeights:
    key: ClassKey
    K: float
    xprime: tuple[int, ...]  # aligned with key.Sigma
    zprime: tuple[int, ...]


@dataclass(frozen=True)
class CountEstimate:
    value: float
    discretized_total: int
    hits: int
    samples: int
    draws: int = 0

    def __post_init__(self):
        if not 0 <= self.hits <= self.samples:
            raise ValueError("need 0 <= hits <= samples")

    @property
    def ratio(self) -> float:
        return self.hits / self.samples if self.samples else 1.0

    @property
    def stderr(self) -> float:
        if not self.samples:
            return 0.0
        mu = self.ratio
        return self.discretized_total * math.sqrt(mu * (1 - mu) / self.samples)

    def to_json(self) -> dict[str, Any]:
        return {
            "value": self.value,
            "discretized_total": self.discretized_total,
            "hits": self.hits,
            "samples": self.samples,
            "draws": self.draws,
        }


# ---------------------------------------------------------------------------
# Discretization primitives


def discrete_ok(ln_a, ln_b, a, b, s1, s2, guard: float = GUARD):
    """The rounded constraint exp(ln_a + a*s1) + exp(ln_b + b*s2) <= 1 + guard.

    Vectorized; this single definition is shared by the DP read-out, the
    pruning frontier and the brute-force reference so all agree bit for bit.
    """
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.exp(ln_a + a * s1) + np.exp(ln_b + b * s2) <= 1.0 + guard


def scale_weights(values: Sequence[float], W: float, K: float) -> np.ndarray:
    """floor(K*v/W), exactly K where v == W, all zero when W == 0."""
    v = np.asarray(values, dtype=np.float64)
    if W == 0:
        return np.zeros(len(v), dtype=np.int64)
    out = np.floor(K * v / W)
    out = np.minimum(out, math.floor(K))
    out[v == W] = math.floor(K)
    return np.maximum(out, 0).astype(np.int64)


def class_keys(x: Sequence[float], z: Sequence[float], single: bool = False) -> list[ClassKey]:
    """All value-level classes; ``single`` keys by W1 only (R2 := R1)."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    n = len(x)
    out = []
    if single:
        for w1 in np.unique(x):
            sig = tuple(int(i) for i in np.nonzero(x <= w1)[0])
            r1 = tuple(i for i in sig if x[i] == w1)
            out.append(ClassKey(r1[0], r1[0], float(w1), 0.0, sig, r1, r1))
        return out
    for w1 in np.unique(x):
        for w2 in np.unique(z):
            sig = tuple(i for i in range(n) if x[i] <= w1 and z[i] <= w2)
            r1 = tuple(i for i in sig if x[i] == w1)
            r2 = tuple(i for i in sig if z[i] == w2)
            if r1 and r2:
                out.append(ClassKey(r1[0], r2[0], float(w1), float(w2), sig, r1, r2))
    return out


def _max_true(pred: Callable[[np.ndarray], np.ndarray], hi: np.ndarray) -> np.ndarray:
    """Per entry, the largest v in [0, hi] with pred(v) true (pred monotone, true->false); -1 if none."""
    hi = np.asarray(hi, dtype=np.int64)
    lo = np.full(hi.shape, -1, dtype=np.int64)
    up = hi + 1
    while True:
        act = up - lo > 1
        if not act.any():
            return lo
        mid = np.where(act, (lo + up) // 2, np.maximum(lo, 0))
        ok = pred(mid) & act
        lo = np.where(ok, mid, lo)
        up = np.where(act & ~ok, mid, up)


# ---------------------------------------------------------------------------
# Layer families: a nested sequence of constraints over the same items


class TwoTermLayers:
    """Layer j: exp(lnA[j] + X) + exp(lnB + Z) <= 1, lnA nondecreasing in j."""

    single = False

    def __init__(self, lnA: Sequence[float], lnB: float):
        self.lnA = np.asarray(lnA, dtype=np.float64)
        if np.any(np.diff(self.lnA) < 0):
            raise ValueError("layer constants must be nondecreasing")
        self.lnB = float(lnB)
        self.n_layers = len(self.lnA)

    def _ok(self, j, a, b, s1, s2):
        return discrete_ok(self.lnA[j], self.lnB, a, b, s1, s2)

    def prune(self, a: float, b: float, s1cap: int, s2cap: int) -> tuple[int, np.ndarray]:
        s1max = int(_max_true(lambda s: self._ok(0, a, b, s, 0), np.array([s1cap]))[0])
        if s1max < 0:
            return -1, np.zeros(1, dtype=np.int64)
        s1 = np.arange(s1max + 1, dtype=np.int64)
        lim = _max_true(lambda s: self._ok(0, a, b, s1, s), np.full(s1max + 1, s2cap))
        return s1max, lim

    def cell_max_layer(self, a, b, s1, s2) -> np.ndarray:
        s1 = np.asarray(s1, dtype=np.int64)
        s2 = np.asarray(s2, dtype=np.int64)
        return _max_true(lambda j: self._ok(j, a, b, s1, s2), np.full(s1.shape, self.n_layers - 1))

    def member(self, j: np.ndarray, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            v = np.exp(self.lnA[j] + X) + np.exp(self.lnB + Z)
        return np.where(v <= 1.0 - GUARD, 1, np.where(v > 1.0 + GUARD, 0, 2)).astype(np.uint8)


class KnapsackLayers:
    """Layer j, Hamming profile h: exp(lnA[j, h] + X) <= 1, lnA nondecreasing in j.

    The secondary sum of a set is its profile index h (items carry their
    group's mixed-radix stride as integer secondary weight), so z' = z and
    no rounding happens on that axis.
    """

    single = True

    def __init__(self, lnA: np.ndarray):
        lnA = np.asarray(lnA, dtype=np.float64)
        if lnA.ndim == 1:
            lnA = lnA[:, None]
        if np.any(np.diff(lnA, axis=0) < 0):
            raise ValueError("layer constants must be nondecreasing in j")
        self.lnA = lnA
        self.n_layers = lnA.shape[0]

    def _ok(self, j, h, a, s1):
        return discrete_ok(self.lnA[j, h], -math.inf, a, 0.0, s1, 0)

    def prune(self, a: float, b: float, s1cap: int, s2cap: int) -> tuple[int, np.ndarray]:
        hs = np.arange(min(self.lnA.shape[1], s2cap + 1))
        best = _max_true(lambda s: self._ok(0, hs, a, s), np.full(hs.shape, s1cap))
        s1max = int(best.max()) if len(best) else -1
        if s1max < 0:
            return -1, np.zeros(1, dtype=np.int64)
        return s1max, np.full(s1max + 1, s2cap, dtype=np.int64)

    def cell_max_layer(self, a, b, s1, s2) -> np.ndarray:
        s1 = np.asarray(s1, dtype=np.int64)
        h = np.asarray(s2, dtype=np.int64)
        return _max_true(lambda j: self._ok(j, h, a, s1), np.full(s1.shape, self.n_layers - 1))

    def member(self, j: np.ndarray, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
        h = np.rint(Z).astype(np.int64)
        with np.errstate(over="ignore", invalid="ignore"):
            v = np.exp(self.lnA[j, h] + X)
        return np.where(v <= 1.0 - GUARD, 1, np.where(v > 1.0 + GUARD, 0, 2)).astype(np.uint8)


# ---------------------------------------------------------------------------
# Engine


@dataclass
class _Class:
    key: ClassKey
    order: np.ndarray  # item indices in DP order (R items last)
    dx: np.ndarray
    dz: np.ndarray
    fl: np.ndarray
    a: float
    b: float
    s1max: int
    s2lim: np.ndarray
    table: Any = None
    keys: np.ndarray = field(default=None)  # terminal cells, J descending
    counts: np.ndarray = field(default=None)
    J: np.ndarray = field(default=None)
    prefix: np.ndarray = field(default=None)
    N: np.ndarray = field(default=None)  # N[j] for every layer


def _unpack(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if keys.dtype == object:
        s1 = np.array([int(k) >> S1_SHIFT for k in keys], dtype=np.int64)
        s2 = np.array([(int(k) >> 2) & S2_MASK for k in keys], dtype=np.int64)
        f = np.array([int(k) & 3 for k in keys], dtype=np.int64)
        return s1, s2, f
    k = keys.astype(np.uint64)
    return (
        (k >> np.uint64(S1_SHIFT)).astype(np.int64),
        ((k >> np.uint64(2)) & np.uint64(S2_MASK)).astype(np.int64),
        (k & np.uint64(3)).astype(np.int64),
    )


def _randbelow(gen: np.random.Generator, high: int, size: int) -> np.ndarray:
    """``size`` uniform integers in [0, high); exact beyond int64 via Python ints."""
    if high < 2**63:
        return gen.integers(0, high, size=size, dtype=np.int64)
    import random

    r = random.Random(int(gen.integers(0, 2**63)))
    return np.array([r.randrange(high) for _ in range(size)], dtype=object)


class Engine:
    """Counting and sampling machinery for a nested family of constraints.

    Parameters
    ----------
    x, z : per-item primary and secondary weights (nonnegative floats).
    layers : TwoTermLayers or KnapsackLayers over these items.
    zgrid : for knapsack layers, integer secondary weights (group strides).
    grid_factor : rounding grid K = grid_factor * n; "auto" picks the finest
        factor in AUTO_GRIDS whose estimated DP size fits AUTO_BUDGET.
    exact : optional ``exact(j, mask) -> bool`` deciding knife-edge samples.
    """

    def __init__(
        self,
        x: Sequence[float],
        z: Sequence[float],
        layers: TwoTermLayers | KnapsackLayers,
        *,
        zgrid: Sequence[int] | None = None,
        grid_factor: float | str = DEFAULT_GRID,
        exact: Callable[[int, int], bool] | None = None,
        backend: str | None = None,
        threads: int | None = None,
        build: bool = True,
    ):
        self.x = np.asarray(x, dtype=np.float64)
        self.z = np.asarray(z, dtype=np.float64)
        self.n = len(self.x)
        self.layers = layers
        self.u = layers.n_layers
        self.single = layers.single
        self.zgrid = None if zgrid is None else np.asarray(zgrid, dtype=np.int64)
        self.exact = exact
        self.backend = backend or _backend.default_name()
        self.threads = max(1, int(threads or 1))
        self.bits = [1 << i for i in range(self.n)]
        keys = class_keys(self.x, self.z, single=self.single)
        if grid_factor == "auto":
            grid_factor = self._auto_grid(keys)
        self.grid_factor = float(grid_factor)
        if self.grid_factor < 1:
            raise ValueError("grid_factor must be >= 1")
        self.K = self.grid_factor * max(self.n, 1)
        self.empty_J = int(layers.cell_max_layer(0.0, 0.0, np.zeros(1), np.zeros(1))[0])
        self.keys = keys
        self.classes: list[_Class] = []
        if not build:
            return
        for key in keys:
            c = self._prepare(key)
            if c is not None:
                self.classes.append(c)
        self.resident = 0
        self._map(self._build_class, self.classes)
        self.classes = [c for c in self.classes if len(c.keys)]
        u = self.u
        self.N_empty = (np.arange(u) <= self.empty_J).astype(np.int64)
        big = any(c.prefix.dtype == object for c in self.classes)
        if self.classes:
            self.Nmat = np.vstack([c.N for c in self.classes])
            if big:
                self.Nmat = self.Nmat.astype(object)
        else:
            self.Nmat = np.zeros((0, u), dtype=np.int64)
        tot = self.Nmat.sum(axis=0) if len(self.classes) else np.zeros(u, dtype=np.int64)
        self.totals = [int(t) + int(e) for t, e in zip(tot, self.N_empty)]

    # -- construction -----------------------------------------------------

    def _weights(self, key: ClassKey, K: float):
        sig = np.array(key.Sigma, dtype=np.int64)
        dx = scale_weights(self.x[sig], key.W1, K)
        if self.zgrid is not None:
            dz = self.zgrid[sig]
        elif self.single:
            dz = np.zeros(len(sig), dtype=np.int64)
        else:
            dz = scale_weights(self.z[sig], key.W2, K)
        return sig, dx, dz

    def _prepare(self, key: ClassKey, K: float | None = None, allow_empty: bool = False) -> _Class | None:
        K = self.K if K is None else K
        sig, dx, dz = self._weights(key, K)
        r1 = set(key.R1)
        r2 = set(key.R2)
        fl = np.array([(1 if i in r1 else 0) | (2 if i in r2 else 0) for i in sig], dtype=np.uint8)
        order = np.argsort(fl != 0, kind="stable")
        a = key.W1 / K
        b = 0.0 if (self.single or key.W2 == 0) else key.W2 / K
        s1cap = int(dx.sum())
        s2cap = int(dz.sum())
        if s1cap >= 1 << 30 or s2cap >= 1 << 32:
            raise OverflowError("discretized sums exceed the packed key range")
        s1max, lim = self.layers.prune(a, b, s1cap, s2cap)
        if s1max < 0 and not allow_empty:
            return None
        return _Class(key, sig[order], dx[order], dz[order], fl[order], a, b, s1max, lim)

    def _auto_grid(self, keys: list[ClassKey]) -> float:
        n = max(self.n, 1)
        for g in AUTO_GRIDS:
            K = g * n
            est = 0.0
            for key in keys:
                c = self._prepare(key, K)
                if c is None:
                    continue
                cells = float(np.sum(c.s2lim[c.s2lim >= 0] + 1)) * (4.0 if len(key.R1) + len(key.R2) > 1 else 2.0)
                k = len(key.Sigma)
                est += sum(min(2.0**i, cells) for i in range(1, k + 1))
                if est > AUTO_BUDGET:
                    break
            if est <= AUTO_BUDGET:
                return g
        return AUTO_GRIDS[-1]

    def _kernel(self):
        return _backend.kernel(self.backend, self.n)

    def _table(self, c: _Class, keep: bool):
        return self._kernel().Table(c.dx, c.dz, c.fl, c.s2lim, c.s1max, keep)

    def _build_class(self, c: _Class) -> None:
        tab = self._table(c, keep=True)
        keys, counts = tab.final()
        s1, s2, f = _unpack(keys)
        sel = f == 3
        keys, counts, s1, s2 = keys[sel], counts[sel], s1[sel], s2[sel]
        J = self.layers.cell_max_layer(c.a, c.b, s1, s2) if len(keys) else np.zeros(0, dtype=np.int64)
        keep = J >= 0
        keys, counts, J = keys[keep], counts[keep], J[keep]
        order = np.argsort(-J, kind="stable")
        c.keys, c.counts, c.J = keys[order], counts[order], J[order]
        if counts.dtype == object or (len(counts) and int(np.sum(counts.astype(object))) >= 2**63):
            c.counts = c.counts.astype(object)
            c.prefix = np.cumsum(c.counts.astype(object))
        else:
            c.prefix = np.cumsum(c.counts.astype(np.int64))
        L = np.searchsorted(-c.J, -np.arange(self.u), side="right")
        if not len(keys):
            c.N = np.zeros(self.u, dtype=np.int64)
        elif c.prefix.dtype == object:
            c.N = np.array([c.prefix[i - 1] if i else 0 for i in L], dtype=object)
        else:
            c.N = np.where(L > 0, c.prefix[np.maximum(L - 1, 0)], 0).astype(np.int64)
        if len(keys) and self.resident + tab.n_states <= RESIDENT_BUDGET:
            c.table = tab
            self.resident += tab.n_states
        else:
            c.table = None

    def _map(self, fn, items):
        items = list(items)
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                return list(ex.map(fn, items))
        return [fn(it) for it in items]

    # -- queries ----------------------------------------------------------

    def class_counts(self, j: int = 0) -> list[tuple[ClassKey, int]]:
        return [(c.key, int(c.N[j])) for c in self.classes if int(c.N[j]) > 0]

    def total(self, j: int = 0) -> int:
        return self.totals[j]

    # -- sampling ---------------------------------------------------------

    def draw(
        self, requests: dict[int, int], rnd: int, seed: int, with_masks: bool = False
    ) -> dict[int, Any]:
        """Uniform samples from the rounded layers, checked against the true ones.

        Returns per layer an array of membership indicators in draw order
        (and the sampled masks when ``with_masks``).
        """
        C = len(self.classes)
        batches: list[list[tuple[int, np.ndarray, np.ndarray]]] = [[] for _ in range(C)]
        label_of: dict[int, np.ndarray] = {}
        for j, k in sorted(requests.items()):
            if k <= 0:
                label_of[j] = np.zeros(0, dtype=np.int64)
                continue
            tot = self.totals[j]
            if tot == 0:
                raise ValueError(f"layer {j} has an empty rounded family")
            gen = np.random.default_rng([seed & _M64, rnd, j])
            weights = [int(self.N_empty[j])] + [int(v) for v in self.Nmat[:, j]]
            cum = np.cumsum(np.array(weights, dtype=object if tot >= 2**63 else np.int64))
            r = _randbelow(gen, tot, size=k)
            labels = np.searchsorted(cum, r, side="right") - 1
            label_of[j] = labels
            for ci in np.unique(labels):
                if ci < 0:
                    continue
                pos = np.nonzero(labels == ci)[0]
                cls = self.classes[ci]
                r2 = _randbelow(gen, int(cls.N[j]), size=len(pos))
                idx = np.searchsorted(cls.prefix, r2, side="right")
                batches[ci].append((j, pos, cls.keys[idx]))

        def run(ci: int):
            if not batches[ci]:
                return None
            cls = self.classes[ci]
            tab = cls.table if cls.table is not None else self._table(cls, keep=True)
            term = np.concatenate([b[2] for b in batches[ci]])
            s = _mix(seed, rnd, ci)
            return self._walk(tab, cls, term, s)

        walked = self._map(run, range(C))
        out: dict[int, Any] = {}
        masks_of: dict[int, np.ndarray] = {}
        X_of: dict[int, np.ndarray] = {}
        Z_of: dict[int, np.ndarray] = {}
        big = self.n >= 64
        for j, labels in label_of.items():
            k = len(labels)
            masks_of[j] = np.zeros(k, dtype=object if big else np.uint64)
            X_of[j] = np.zeros(k)
            Z_of[j] = np.zeros(k)
        for ci in range(C):
            if walked[ci] is None:
                continue
            m, X, Z = walked[ci]
            off = 0
            for j, pos, _ in batches[ci]:
                e = off + len(pos)
                masks_of[j][pos] = m[off:e]
                X_of[j][pos] = X[off:e]
                Z_of[j][pos] = Z[off:e]
                off = e
        for j in label_of:
            codes = self.layers.member(np.full(len(X_of[j]), j), X_of[j], Z_of[j])
            und = np.nonzero(codes == 2)[0]
            for i in und:
                mask = int(masks_of[j][i])
                if self.exact is not None:
                    codes[i] = 1 if self.exact(j, mask) else 0
                else:
                    codes[i] = 1 if self._float_member(j, mask) else 0
            out[j] = (codes, masks_of[j]) if with_masks else codes
        return out

    def _walk(self, tab, cls: _Class, term: np.ndarray, seed: int):
        bits = [self.bits[i] for i in cls.order]
        xs = self.x[cls.order]
        zs = self.z[cls.order]
        if self.zgrid is not None:
            zs = self.zgrid[cls.order].astype(np.float64)
        return tab.walk(term, seed, bits, xs, zs)

    def _float_member(self, j: int, mask: int) -> bool:
        idx = [i for i in range(self.n) if mask >> i & 1]
        X = math.fsum(self.x[i] for i in idx)
        if self.zgrid is not None:
            Z = float(sum(int(self.zgrid[i]) for i in idx))
        else:
            Z = math.fsum(self.z[i] for i in idx)
        codes = self.layers.member(np.array([j]), np.array([X]), np.array([Z]))
        return bool(codes[0] == 1)

    # -- estimation -------------------------------------------------------

    def estimate(
        self,
        layers: Iterable[int],
        epsilon: float,
        delta: float,
        seed: int,
        budget: str = "adaptive",
        ratio_bound: float | None = None,
    ) -> dict[int, CountEstimate]:
        """(1 +- epsilon) estimates of the true layer counts, each with confidence 1 - delta."""
        if ratio_bound is None:
            # a fixed profile can leave the true family empty while its rounding is not
            if self.zgrid is not None:
                ratio_bound = math.inf
            else:
                ratio_bound = float(self.n + 1) if self.single else float(self.n + 1) ** 2
        ests: dict[int, Any] = {}
        out: dict[int, CountEstimate] = {}
        for j in layers:
            # a nonempty true family holds at least one of the totals[j] rounded sets
            R = float(self.totals[j])
            if self.totals[j] == 0:
                out[j] = CountEstimate(0.0, 0, 0, 0, 0)
            elif budget == "chernoff":
                bound = R if math.isinf(ratio_bound) else ratio_bound
                ests[j] = FixedEstimator(chernoff_samples(bound, epsilon, delta))
            elif budget == "adaptive":
                ests[j] = OptimalEstimator(epsilon, delta, floor_mu=1.0 / min(ratio_bound, R))
            else:
                raise ValueError(f"unknown budget {budget!r}")
        res = run_rounds(ests, lambda req, rnd: self.draw(req, rnd, seed))
        for j, r in res.items():
            tot = self.totals[j]
            out[j] = CountEstimate(r.mu * tot, tot, r.hits, r.samples, r.draws)
        return dict(sorted(out.items()))


# ---------------------------------------------------------------------------
# Single-constraint API


def _engine_for(c: TwoTermConstraint, grid_factor: float = DEFAULT_GRID, **kw) -> Engine:
    layers = TwoTermLayers([c.log_A], c.log_B)
    return Engine(
        c.x,
        c.z,
        layers,
        grid_factor=grid_factor,
        exact=lambda j, mask: c.exact_member(i for i in range(c.n) if mask >> i & 1),
        **kw,
    )


def discretize(c: TwoTermConstraint, key: ClassKey, grid_factor: float = DEFAULT_GRID) -> DiscretizedWeights:
    if key.W1 < 0 or key.W2 < 0:
        raise ValueError("class maxima must be nonnegative")
    if key.W2 == 0 and key.Sigma and any(c.z[i] > 0 for i in key.Sigma):
        raise RuntimeError("internal error: W2 = 0 with positive secondary weights in the pool")
    K = grid_factor * max(c.n, 1)
    sig = np.array(key.Sigma, dtype=np.int64)
    x = np.asarray(c.x)[sig] if len(sig) else np.zeros(0)
    z = np.asarray(c.z)[sig] if len(sig) else np.zeros(0)
    xp = scale_weights(x, key.W1, K)
    zp = scale_weights(z, key.W2, K)
    return DiscretizedWeights(key, K, tuple(int(v) for v in xp), tuple(int(v) for v in zp))


class CountTable:
    """DP table of one class: F(step, s1, s2, flags) counts subsets of the first
    ``step`` pool items (in DP order) with the given rounded sums and attained
    maxima flags (bit 0: some R1 item, bit 1: some R2 item)."""

    def __init__(self, cls: _Class, tab, ln_a: float, ln_b: float):
        self.key = cls.key
        self.order = tuple(int(i) for i in cls.order)
        self.xprime = tuple(int(v) for v in cls.dx)
        self.zprime = tuple(int(v) for v in cls.dz)
        self._tab = tab
        keys, counts = tab.final()
        s1, s2, f = _unpack(keys)
        ok = discrete_ok(ln_a, ln_b, cls.a, cls.b, s1, s2)
        cnt = [int(v) for v in counts]
        self.F4 = sum(c for c, o in zip(cnt, ok) if o)
        self.F1 = sum(c for c, o, g in zip(cnt, ok, f) if o and not g & 1)
        self.F2 = sum(c for c, o, g in zip(cnt, ok, f) if o and not g & 2)
        self.F3 = sum(c for c, o, g in zip(cnt, ok, f) if o and g == 0)
        self.N = sum(c for c, o, g in zip(cnt, ok, f) if o and g == 3)

    @property
    def steps(self) -> int:
        return len(self.order)

    def F(self, step: int, s1: int, s2: int, flags: int | None = None) -> int:
        """Count at (step, s1, s2); flags=None sums over all flag values."""
        base = (s1 << S1_SHIFT) | (s2 << 2)
        gs = range(4) if flags is None else (flags,)
        return sum(int(self._tab.count(step, base | g)) for g in gs)


def count_discretized(
    c: TwoTermConstraint, key: ClassKey, grid_factor: float = DEFAULT_GRID
) -> tuple[CountTable, int]:
    """Exact count of rounded solutions in class ``key`` (both maxima attained)."""
    eng = _engine_for(c, grid_factor, build=False)
    cls = eng._prepare(key, allow_empty=True)
    ct = CountTable(cls, eng._table(cls, keep=True), c.log_A, c.log_B)
    return ct, ct.N


def empty_set_feasible(c: TwoTermConstraint) -> bool:
    return bool(discrete_ok(c.log_A, c.log_B, 0.0, 0.0, 0, 0))


def enumerate_classes(c: TwoTermConstraint, grid_factor: float = DEFAULT_GRID) -> list[tuple[ClassKey, int]]:
    return _engine_for(c, grid_factor).class_counts(0)


def discretized_total(c: TwoTermConstraint, grid_factor: float = DEFAULT_GRID) -> int:
    """|S'|: rounded solutions over all classes plus the empty set."""
    return _engine_for(c, grid_factor).total(0)


def sample_discretized(
    c: TwoTermConstraint | Engine,
    rng: Any = None,
    size: int | None = None,
    grid_factor: float = DEFAULT_GRID,
    layer: int = 0,
):
    """Uniform draw(s) from the rounded family S'.  Returns a frozenset, or a list when ``size`` is given."""
    eng = c if isinstance(c, Engine) else _engine_for(c, grid_factor)
    if eng.total(layer) == 0:
        raise ValueError("the rounded family is empty")
    k = 1 if size is None else int(size)
    _, masks = eng.draw({layer: k}, 0, _seed_of(rng), with_masks=True)[layer]
    sets = [frozenset(i for i in range(eng.n) if int(m) >> i & 1) for m in masks]
    return sets[0] if size is None else sets


def estimate_count(
    c: TwoTermConstraint,
    epsilon: float,
    delta: float,
    rng: Any = None,
    *,
    budget: str = "chernoff",
    grid_factor: float | str = DEFAULT_GRID,
) -> CountEstimate:
    """(1 +- epsilon) estimate of |S| with probability >= 1 - delta."""
    if not (0 < epsilon < 1 and 0 < delta < 1):
        raise ValueError("epsilon and delta must lie in (0, 1)")
    eng = _engine_for(c, grid_factor)
    return eng.estimate([0], float(epsilon), float(delta), _seed_of(rng), budget=budget)[0]


def _knapsack_engine(w, cap: float, zgrid=None, lnA=None, grid_factor=DEFAULT_GRID, exact=None):
    w = [float(v) for v in w]
    if any(v < 0 for v in w):
        raise ValueError("weights must be nonnegative")
    if lnA is None:
        lnA = np.array([[-float(cap)]])
    z = np.zeros(len(w)) if zgrid is None else np.asarray(zgrid, dtype=np.float64)
    return Engine(w, z, KnapsackLayers(lnA), zgrid=zgrid, grid_factor=grid_factor, exact=exact)


def count_knapsack(
    w: Sequence[float],
    cap: float,
    epsilon: float,
    delta: float,
    rng: Any = None,
    *,
    budget: str = "chernoff",
    grid_factor: float | str = DEFAULT_GRID,
) -> CountEstimate:
    """(1 +- epsilon) estimate of #{S : sum_{i in S} w_i <= cap}."""
    w = [float(v) for v in w]
    if cap < 0:
        return CountEstimate(0.0, 0, 0, 0)
    if cap == math.inf:
        tot = 2 ** len(w)
        return CountEstimate(float(tot), tot, 1, 1)

    def exact(j: int, mask: int) -> bool:
        return math.fsum(w[i] for i in range(len(w)) if mask >> i & 1) <= cap

    eng = _knapsack_engine(w, cap, grid_factor=grid_factor, exact=exact)
    return eng.estimate([0], float(epsilon), float(delta), _seed_of(rng), budget=budget)[0]


def group_strides(sizes: Sequence[int]) -> list[int]:
    out, acc = [], 1
    for s in sizes:
        out.append(acc)
        acc *= s + 1
    return out


def count_knapsack_grouped(
    w: Sequence[float],
    cap: float,
    groups: Sequence[Iterable[int]],
    r: Sequence[int],
    epsilon: float,
    delta: float,
    rng: Any = None,
    *,
    budget: str = "adaptive",
    grid_factor: float | str = DEFAULT_GRID,
) -> CountEstimate:
    """(1 +- epsilon) estimate of #{S : sum_S w <= cap, |S & block_g| = r_g for all g}.

    Fixing the Hamming profile breaks the (n+1) bound on rounded-to-true
    ratio, so the default budget adapts to the observed hit rate.
    """
    w = [float(v) for v in w]
    n = len(w)
    blocks = [sorted(set(g)) for g in groups]
    seen = sorted(i for b in blocks for i in b)
    if seen != list(range(n)):
        raise ValueError("groups must partition the item indices")
    if len(r) != len(blocks) or any(not 0 <= rg <= len(b) for rg, b in zip(r, blocks)):
        raise ValueError("infeasible Hamming weights")
    if cap < 0:
        return CountEstimate(0.0, 0, 0, 0)
    sizes = [len(b) for b in blocks]
    strides = group_strides(sizes)
    zgrid = np.zeros(n, dtype=np.int64)
    for g, b in enumerate(blocks):
        zgrid[b] = strides[g]
    H = strides[-1] * (sizes[-1] + 1) if blocks else 1
    target = sum(s * rg for s, rg in zip(strides, r))
    if cap == math.inf:
        tot = math.prod(math.comb(s, rg) for s, rg in zip(sizes, r))
        return CountEstimate(float(tot), tot, 1, 1)
    lnA = np.full((1, H), math.inf)
    lnA[0, target] = -float(cap)

    def exact(j: int, mask: int) -> bool:
        return math.fsum(w[i] for i in range(n) if mask >> i & 1) <= cap

    eng = _knapsack_engine(w, cap, zgrid=zgrid, lnA=lnA, grid_factor=grid_factor, exact=exact)
    return eng.estimate([0], float(epsilon), float(delta), _seed_of(rng), budget=budget)[0]
