"""Continued fractions of rotation numbers.

Rotation numbers are carried at high precision (mpmath) together with their
partial quotients ``a_1, a_2, ...``.  Quadratic irrationals are expanded with
exact integer arithmetic, so the golden and silver means never see rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath

from .errors import PrecisionExhausted, RationalInput, ValidationError

DEFAULT_DIGITS = 50
DEFAULT_TERMS = 64


@dataclass(frozen=True)
class Convergent:
    p: int
    q: int
    index: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.p, self.q)


def _floor_quadratic(P: int, D: int, Q: int) -> int:
    """floor((P + sqrt(D)) / Q) for non-square D."""
    r = math.isqrt(D)
    if Q > 0:
        return (P + r) // Q
    return -((P + r) // (-Q) + 1)


def _quadratic_terms(P: int, D: int, Q: int, n_terms: int) -> tuple[int, ...]:
    a = _floor_quadratic(P, D, Q)
    if a != 0:
        raise ValidationError(f"quadratic irrational ({P}+sqrt({D}))/{Q} is not in (0,1)")
    out = []
    for _ in range(n_terms):
        P = a * Q - P
        Q = (D - P * P) // Q
        a = _floor_quadratic(P, D, Q)
        out.append(a)
    return tuple(out)


def _exact_terms(x: Fraction, n_terms: int) -> tuple[list[int], bool]:
    """Partial quotients of a rational in (0,1); second item says whether it terminated."""
    terms: list[int] = []
    num, den = x.numerator, x.denominator
    # x = num/den, strip the integer part first
    num -= (num // den) * den
    while len(terms) < n_terms:
        if num == 0:
            return terms, True
        a, rem = divmod(den, num)
        terms.append(a)
        den, num = num, rem
    return terms, num == 0


@dataclass(frozen=True)
class RotationNumber:
    """Irrational rotation number in (0,1) with continued-fraction data.

    ``quadratic`` holds ``(P, D, Q)`` when ``value == (P + sqrt(D)) / Q``
    exactly; such numbers can be re-expanded and re-evaluated at any precision.
    """

    value: mpmath.mpf
    terms: tuple[int, ...]
    precision_digits: int = DEFAULT_DIGITS
    quadratic: tuple[int, int, int] | None = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not (0 < self.value < 1):
            raise ValidationError(f"rotation number must lie in (0,1), got {self.value}")
        if any(a < 1 for a in self.terms):
            raise ValidationError("partial quotients must be >= 1")

    @classmethod
    def from_quadratic(cls, P: int, D: int, Q: int, n_terms: int = DEFAULT_TERMS,
                       digits: int = DEFAULT_DIGITS, name: str = "") -> "RotationNumber":
        if math.isqrt(D) ** 2 == D:
            raise ValidationError("D must not be a perfect square")
        if (D - P * P) % Q:
            raise ValidationError("Q must divide D - P^2")
        with mpmath.workdps(digits + 10):
            value = (mpmath.mpf(P) + mpmath.sqrt(D)) / Q
        return cls(value=value, terms=_quadratic_terms(P, D, Q, n_terms),
                   precision_digits=digits, quadratic=(P, D, Q), name=name)

    @classmethod
    def golden(cls, n_terms: int = DEFAULT_TERMS, digits: int = DEFAULT_DIGITS):
        """(sqrt(5) - 1) / 2 = [0; 1, 1, 1, ...]."""
        return cls.from_quadratic(-1, 5, 2, n_terms, digits, name="golden")

    @classmethod
    def silver(cls, n_terms: int = DEFAULT_TERMS, digits: int = DEFAULT_DIGITS):
        """sqrt(2) - 1 = [0; 2, 2, 2, ...]."""
        return cls.from_quadratic(-1, 2, 1, n_terms, digits, name="silver")

    @classmethod
    def from_value(cls, x, n_terms: int = 32, digits: int | None = None):
        digits = digits or DEFAULT_DIGITS
        terms = expand(x, n_terms, precision_digits=digits)
        with mpmath.workdps(digits + 10):
            value = mpmath.mpf(x)
        return cls(value=value, terms=tuple(terms), precision_digits=digits)

    @classmethod
    def named(cls, kind: str, n_terms: int = DEFAULT_TERMS, digits: int = DEFAULT_DIGITS):
        if kind == "golden":
            return cls.golden(n_terms, digits)
        if kind == "silver":
            return cls.silver(n_terms, digits)
        raise ValidationError(f"unknown rotation number kind {kind!r}")

    def fixed_point(self, digits: int) -> int:
        """floor(value * 10**digits); exact for quadratic irrationals."""
        S = 10 ** digits
        if self.quadratic is not None:
            P, D, Q = self.quadratic
            x = math.isqrt(D * S * S)
            if Q > 0:
                return (P * S + x) // Q
            return -((P * S + x) // (-Q) + 1)
        if digits > self.precision_digits:
            raise PrecisionExhausted(
                f"requested {digits} digits of a rotation number known to {self.precision_digits}")
        with mpmath.workdps(digits + 10):
            return int(mpmath.floor(self.value * S))

    def terms_upto(self, n: int) -> tuple[int, ...]:
        if n <= len(self.terms):
            return self.terms[:n]
        if self.quadratic is None:
            raise PrecisionExhausted(f"only {len(self.terms)} terms are known")
        return _quadratic_terms(*self.quadratic, n)

    def convergents(self, n: int | None = None) -> list[Convergent]:
        return convergents(self.terms_upto(n) if n else self.terms)

    def __float__(self):
        return float(self.value)


def expand(x, n_terms: int, precision_digits: int | None = None) -> list[int]:
    """Partial quotients ``a_1..a_n`` of ``x`` in (0,1).

    ``int``, ``float`` and ``Fraction`` inputs are expanded exactly (a float is
    the binary rational it stores).  ``mpmath.mpf`` and ``str`` inputs are
    treated as known to ``precision_digits`` decimals only: both ends of the
    uncertainty interval are expanded and terms are accepted while they agree.
    """
    if n_terms < 1:
        raise ValidationError("n_terms must be >= 1")
    if isinstance(x, RotationNumber):
        return list(x.terms_upto(n_terms))
    if isinstance(x, (int, float, Fraction)):
        fx = Fraction(x)
        if not (0 < fx < 1):
            raise ValidationError(f"x must lie in (0,1), got {x}")
        terms, done = _exact_terms(fx, n_terms)
        if len(terms) < n_terms:
            raise RationalInput(f"expansion of rational {fx} terminates after {len(terms)} terms",
                                terms)
        return terms
    if isinstance(x, str):
        digits = precision_digits or max(len(x.strip().lstrip("0.")), 1)
    else:
        digits = precision_digits or mpmath.mp.dps
    with mpmath.workdps(digits + 20):
        xm = mpmath.mpf(x)
        if not (0 < xm < 1):
            raise ValidationError(f"x must lie in (0,1), got {x}")
        man, exp = xm.man_exp
    centre = Fraction(int(man)) * Fraction(2) ** int(exp)
    half = Fraction(1, 10 ** digits)
    lo, _ = _exact_terms(max(centre - half, Fraction(0)), n_terms)
    hi, _ = _exact_terms(min(centre + half, Fraction(1)), n_terms)
    agreed: list[int] = []
    for a, b in zip(lo, hi):
        if a != b:
            break
        agreed.append(a)
    if len(agreed) < n_terms:
        raise PrecisionExhausted(
            f"{digits} digits determine only {len(agreed)} partial quotients", n=len(agreed))
    return agreed


def convergents(terms: Sequence[int]) -> list[Convergent]:
    """Convergents ``p_k/q_k`` for k = 0..len(terms).

    Seeds ``p_0 = 0, p_1 = 1, q_0 = 1, q_1 = a_1``, then
    ``p_k = a_k p_{k-1} + p_{k-2}`` and likewise for ``q``.
    """
    terms = [int(a) for a in terms]
    if any(a < 1 for a in terms):
        raise ValidationError("partial quotients must be >= 1")
    out = [Convergent(0, 1, 0)]
    if not terms:
        return out
    out.append(Convergent(1, terms[0], 1))
    p2, q2, p1, q1 = 0, 1, 1, terms[0]
    for k, a in enumerate(terms[1:], start=2):
        p2, q2, p1, q1 = p1, q1, a * p1 + p2, a * q1 + q2
        out.append(Convergent(p1, q1, k))
    return out


def density_statistic(terms: Sequence[int]) -> float:
    """max over prefixes of the running mean of the partial quotients."""
    if len(terms) == 0:
        raise ValidationError("terms must be nonempty")
    best, total = 0.0, 0
    for n, a in enumerate(terms, start=1):
        total += a
        best = max(best, total / n)
    return best


def exponential_growth_bound(convergents: Iterable) -> float:
    """Smallest B with q_n <= B**n on the available prefix, i.e. max_n q_n**(1/n).

    Accepts :class:`Convergent` objects or bare denominators (indexed by position).
    """
    qs = [(c.index, c.q) if isinstance(c, Convergent) else (i, int(c))
          for i, c in enumerate(convergents)]
    if len(qs) < 2:
        raise ValidationError("need at least two convergents")
    return max(math.exp(math.log(q) / n) for n, q in qs if n >= 1)


def reconstruct(terms: Sequence[int]) -> Fraction:
    """Exact value of the finite continued fraction [0; a_1, ..., a_n]."""
    x = Fraction(0)
    for a in reversed(terms):
        x = 1 / (a + x)
    return x
