"""Number model, distribution types and TV-preserving instance transforms."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

__all__ = [
    "Rational",
    "ParseError",
    "parse_rational",
    "format_rational",
    "ln_fraction",
    "ProductDistribution",
    "TvInstance",
    "EstimatorParams",
    "Violation",
    "HalfcaseReport",
    "pmf",
    "flip_coordinates",
    "normalize",
    "validate_halfcase",
    "load_instance",
    "dump_instance",
]

Rational = Fraction

MAX_DECIMAL_DIGITS = 18
_DECIMAL = re.compile(r"^[+-]?(\d+)(?:\.(\d*))?$")


class ParseError(ValueError):
    pass


def parse_rational(value: Any) -> Fraction:
    """Parse ``"num/den"``, a decimal string or an integer into an exact Fraction.

    Decimal strings may carry at most 18 fractional digits; they are read as
    num/10^k without any binary rounding.  JSON floats are accepted through
    their shortest repr, under the same digit limit.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise ParseError(f"not a rational: {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ParseError(f"not a finite number: {value!r}")
        value = repr(value)
        if "e" in value or "E" in value:
            raise ParseError(f"exponent notation not supported: {value}")
    if not isinstance(value, str):
        raise ParseError(f"not a rational: {value!r}")
    text = value.strip()
    if "/" in text:
        num, _, den = text.partition("/")
        try:
            n, d = int(num), int(den)
        except ValueError:
            raise ParseError(f"malformed fraction: {value!r}") from None
        if d == 0:
            raise ParseError(f"zero denominator: {value!r}")
        return Fraction(n, d)
    m = _DECIMAL.match(text)
    if m is None:
        raise ParseError(f"malformed number: {value!r}")
    frac = m.group(2) or ""
    if len(frac) > MAX_DECIMAL_DIGITS:
        raise ParseError(f"more than {MAX_DECIMAL_DIGITS} fractional digits: {value!r}")
    return Fraction(text)


def format_rational(r: Fraction) -> str:
    return f"{r.numerator}/{r.denominator}"


def ln_fraction(r: Fraction) -> float:
    """Natural log of a positive rational, safe for huge numerators/denominators."""
    if r <= 0:
        raise ValueError("logarithm of a non-positive rational")
    return math.log(r.numerator) - math.log(r.denominator)


@dataclass(frozen=True)
class ProductDistribution:
    marginals: tuple[Fraction, ...]

    def __init__(self, marginals: Iterable[Any]):
        ms = tuple(parse_rational(m) for m in marginals)
        for i, m in enumerate(ms):
            if not 0 <= m <= 1:
                raise ValueError(f"marginal {i} = {m} outside [0, 1]")
        object.__setattr__(self, "marginals", ms)

    def __len__(self) -> int:
        return len(self.marginals)

    def __getitem__(self, i: int) -> Fraction:
        return self.marginals[i]

    def __iter__(self):
        return iter(self.marginals)

    @property
    def n(self) -> int:
        return len(self.marginals)


@dataclass(frozen=True)
class TvInstance:
    p: ProductDistribution
    q: ProductDistribution

    def __post_init__(self):
        if not isinstance(self.p, ProductDistribution):
            object.__setattr__(self, "p", ProductDistribution(self.p))
        if not isinstance(self.q, ProductDistribution):
            object.__setattr__(self, "q", ProductDistribution(self.q))
        if len(self.p) != len(self.q):
            raise ValueError(f"length mismatch: |p|={len(self.p)}, |q|={len(self.q)}")

    @property
    def n(self) -> int:
        return len(self.p)

    @classmethod
    def of(cls, p: Iterable[Any], q: Iterable[Any]) -> "TvInstance":
        return cls(ProductDistribution(p), ProductDistribution(q))

    def to_json(self) -> dict[str, list[str]]:
        return {
            "p": [format_rational(x) for x in self.p],
            "q": [format_rational(x) for x in self.q],
        }


def _as_fraction_param(value: Any, name: str) -> Fraction:
    try:
        return parse_rational(value)
    except ParseError as exc:
        raise ValueError(f"{name}: {exc}") from None


@dataclass(frozen=True)
class EstimatorParams:
    epsilon: Fraction
    delta: Fraction
    seed: int = 0

    def __post_init__(self):
        eps = _as_fraction_param(self.epsilon, "epsilon")
        delta = _as_fraction_param(self.delta, "delta")
        if not 0 < eps <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        if not 0 < delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {delta}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "seed", int(self.seed))


def pmf(d: ProductDistribution | Sequence[Fraction], x: Sequence[int] | str) -> Fraction:
    """Exact probability of the bit-string ``x`` under the product ``d``."""
    marg = d.marginals if isinstance(d, ProductDistribution) else tuple(d)
    bits = [int(c) for c in x] if isinstance(x, str) else list(x)
    if len(bits) != len(marg):
        raise ValueError(f"length mismatch: |x|={len(bits)}, n={len(marg)}")
    out = Fraction(1)
    for b, p in zip(bits, marg):
        out *= p if b else 1 - p
    return out


def flip_coordinates(inst: TvInstance, mask: Iterable[int]) -> TvInstance:
    """Replace (p_i, q_i) by (1-p_i, 1-q_i) on the (0-based) indices in ``mask``."""
    mask = set(mask)
    bad = [i for i in mask if not 0 <= i < inst.n]
    if bad:
        raise ValueError(f"indices out of range: {sorted(bad)}")
    p = [1 - v if i in mask else v for i, v in enumerate(inst.p)]
    q = [1 - v if i in mask else v for i, v in enumerate(inst.q)]
    return TvInstance.of(p, q)


def normalize(inst: TvInstance) -> tuple[TvInstance, int]:
    """Drop coordinates with p_i = q_i.  Returns the reduced instance and the drop count."""
    keep = [i for i in range(inst.n) if inst.p[i] != inst.q[i]]
    out = TvInstance.of([inst.p[i] for i in keep], [inst.q[i] for i in keep])
    return out, inst.n - len(keep)


def _halfcase_ok(p: Fraction, q: Fraction) -> bool:
    return Fraction(1, 2) <= p < 1 and 0 < q <= p


@dataclass(frozen=True)
class Violation:
    index: int
    p: Fraction
    q: Fraction
    reason: str
    repairable_by_flip: bool


@dataclass(frozen=True)
class HalfcaseReport:
    ok: bool
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    def __bool__(self) -> bool:
        return self.ok

    @property
    def repairable(self) -> bool:
        return all(v.repairable_by_flip for v in self.violations)

    @property
    def flip_mask(self) -> set[int]:
        return {v.index for v in self.violations if v.repairable_by_flip}

    def to_json(self) -> dict[str, Any]:
        return {
            "ok": self.ok,
            "violations": [
                {
                    "index": v.index,
                    "p": format_rational(v.p),
                    "q": format_rational(v.q),
                    "reason": v.reason,
                    "repairable_by_flip": v.repairable_by_flip,
                }
                for v in self.violations
            ],
        }


def validate_halfcase(inst: TvInstance) -> HalfcaseReport:
    """Check 1/2 <= p_i < 1 and 0 < q_i <= p_i on every coordinate with p_i != q_i.

    Indices in the report refer to the instance as given.  A violation is
    repairable when flipping that coordinate (which preserves TV) satisfies
    the bounds.
    """
    half = Fraction(1, 2)
    out = []
    for i, (p, q) in enumerate(zip(inst.p, inst.q)):
        if p == q or _halfcase_ok(p, q):
            continue
        if p < half:
            reason = "p_i < 1/2"
        elif p == 1:
            reason = "p_i = 1"
        elif q == 0:
            reason = "q_i = 0"
        else:
            reason = "q_i > p_i"
        out.append(Violation(i, p, q, reason, _halfcase_ok(1 - p, 1 - q)))
    return HalfcaseReport(not out, tuple(out))


def load_instance(source: str | dict[str, Any]) -> TvInstance:
    """Read an instance from a JSON file path, a JSON string or a parsed dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if not source.lstrip().startswith("{"):
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "p" not in doc or "q" not in doc:
        raise ParseError('instance must be an object with "p" and "q" arrays')
    if not isinstance(doc["p"], list) or not isinstance(doc["q"], list):
        raise ParseError('"p" and "q" must be arrays')
    p = [parse_rational(v) for v in doc["p"]]
    q = [parse_rational(v) for v in doc["q"]]
    try:
        return TvInstance.of(p, q)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def dump_instance(inst: TvInstance, path: str | None = None, **extra: Any) -> str:
    doc: dict[str, Any] = inst.to_json()
    doc.update(extra)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text
