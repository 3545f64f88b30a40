"""Sturmian potentials V(n) = lam * 1_[1-theta, 1)(n*theta + beta mod 1).

The indicator is evaluated through the identity

    1_[1-theta, 1)(frac(x)) = floor(x + theta) - floor(x),

so only floors of n*theta + beta are needed.  For irrational theta these are
computed in exact integer fixed point at ``precision_digits`` decimals; a floor
whose argument sits within ``10**-(precision_digits - 10)`` of an integer is
refused with :class:`PrecisionExhausted` instead of guessed.  Rational theta
(periodic approximants) is handled in exact rational arithmetic.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .cfrac import Convergent, RotationNumber
from .errors import OutOfRange, PrecisionExhausted, ValidationError, WindowTooShort

GUARD_DIGITS = 10

KINDS = ("sturmian", "constant", "custom")


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, float)):
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        man, exp = x.man_exp
        sign = -1 if x < 0 else 1
        return sign * Fraction(int(abs(man))) * Fraction(2) ** int(exp)
    if isinstance(x, str):
        return Fraction(x)
    raise ValidationError(f"cannot interpret {x!r} as a real number")


@dataclass(frozen=True)
class PotentialSpec:
    """Potential on Z.

    kind ``sturmian``: ``lam * 1_[1-theta,1)(n theta + beta mod 1)``; ``theta`` is a
    :class:`RotationNumber` or, for periodic approximants, a ``Fraction``.
    kind ``constant``: ``V(n) = lam`` everywhere.
    kind ``custom``: ``V(offset + k) = values[k]``, undefined elsewhere.
    """

    lam: float = 0.0
    theta: RotationNumber | Fraction | None = None
    beta: Fraction = Fraction(0)
    kind: str = "sturmian"
    values: tuple[float, ...] = ()
    offset: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        object.__setattr__(self, "lam", float(self.lam))
        if self.kind == "sturmian":
            if self.theta is None:
                raise ValidationError("sturmian potential needs theta")
            if not isinstance(self.theta, RotationNumber):
                object.__setattr__(self, "theta", _to_fraction(self.theta))
            beta = _to_fraction(self.beta)
            if not (0 <= beta < 1):
                reduced = beta - (beta.numerator // beta.denominator)
                warnings.warn(f"beta={float(beta)} normalized mod 1 to {float(reduced)}",
                              stacklevel=3)
                beta = reduced
            object.__setattr__(self, "beta", beta)
        elif self.kind == "custom":
            if not self.values:
                raise ValidationError("custom potential needs values")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def sturmian(cls, lam, theta, beta=0):
        return cls(lam=lam, theta=theta, beta=beta, kind="sturmian")

    @classmethod
    def constant(cls, c=0.0):
        return cls(lam=c, kind="constant")

    @classmethod
    def free(cls):
        return cls(lam=0.0, kind="constant")

    @classmethod
    def custom(cls, values: Sequence[float], offset: int = 0):
        return cls(kind="custom", values=tuple(values), offset=offset)

    @property
    def periodic(self) -> bool:
        return self.kind == "sturmian" and isinstance(self.theta, Fraction)

    @property
    def bound(self) -> float:
        if self.kind == "custom":
            return max(abs(v) for v in self.values)
        return abs(self.lam)

    @property
    def digits(self) -> int:
        return self.theta.precision_digits

    @cached_property
    def _fixed(self) -> tuple[int, int, int]:
        digits = self.digits
        S = 10 ** digits
        return self.theta.fixed_point(digits), (self.beta * S).__floor__(), S

    def max_site(self) -> int:
        """Largest |n| at which at least GUARD_DIGITS digits survive the tolerance."""
        return 10 ** (self.digits - 2 * GUARD_DIGITS)

    def describe(self) -> dict:
        d = {"kind": self.kind, "lambda": self.lam}
        if self.kind == "sturmian":
            if isinstance(self.theta, Fraction):
                d["theta"] = f"{self.theta.numerator}/{self.theta.denominator}"
            else:
                d["theta"] = self.theta.name or mpmath.nstr(self.theta.value, 20)
                d["precision_digits"] = self.theta.precision_digits
            d["beta"] = str(self.beta)
        elif self.kind == "custom":
            d["offset"] = self.offset
            d["length"] = len(self.values)
        return d


@dataclass
class PotentialWindow:
    offset: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or len(self.values) < 1:
            raise ValidationError("window needs at least one value")

    def __len__(self):
        return len(self.values)

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.values))

    def __eq__(self, other):
        return (isinstance(other, PotentialWindow) and self.offset == other.offset
                and np.array_equal(self.values, other.values))


def _rational_floors(theta: Fraction, beta: Fraction, m_from: int, m_to: int) -> list[int]:
    p, q = theta.numerator, theta.denominator
    bn, bd = beta.numerator, beta.denominator
    # floor(m p / q + bn / bd) = floor((m p bd + bn q) / (q bd))
    den = q * bd
    return [(m * p * bd + bn * q) // den for m in range(m_from, m_to + 1)]


def _irrational_floors(spec: PotentialSpec, m_from: int, m_to: int) -> list[int]:
    th, be, S = spec._fixed
    cap = spec.max_site()
    if max(abs(m_from), abs(m_to)) > cap:
        raise PrecisionExhausted(
            f"site beyond {cap} leaves fewer than {GUARD_DIGITS} guard digits",
            n=m_to if abs(m_to) > abs(m_from) else m_from)
    # 10**-(digits - GUARD_DIGITS) in units of 10**-digits
    tol = 10 ** GUARD_DIGITS
    hi = S - tol
    out = []
    r = m_from * th + be
    for m in range(m_from, m_to + 1):
        f, res = divmod(r, S)
        if (res < tol or res > hi) and m != 0:
            raise PrecisionExhausted(
                f"{m}*theta+beta lies within 1e-{spec.digits - GUARD_DIGITS} of an integer",
                n=m)
        out.append(f if m != 0 else 0)
        r += th
    return out


@lru_cache(maxsize=128)
def _window_cached(spec: PotentialSpec, n_from: int, n_to: int) -> np.ndarray:
    n = n_to - n_from + 1
    if spec.kind == "constant":
        arr = np.full(n, spec.lam)
    elif spec.kind == "custom":
        lo, hi = spec.offset, spec.offset + len(spec.values) - 1
        if n_from < lo or n_to > hi:
            raise OutOfRange(f"custom potential is defined on [{lo}, {hi}] only")
        arr = np.array(spec.values[n_from - lo:n_to - lo + 1])
    elif spec.lam == 0.0:
        arr = np.zeros(n)
    else:
        if spec.periodic:
            floors = _rational_floors(spec.theta, spec.beta, n_from, n_to + 1)
        else:
            floors = _irrational_floors(spec, n_from, n_to + 1)
        jumps = np.diff(np.array(floors, dtype=np.int64))
        arr = spec.lam * jumps.astype(float)
    arr.setflags(write=False)
    return arr


def potential_array(spec: PotentialSpec, n_from: int, n_to: int) -> np.ndarray:
    """V(n_from..n_to) as a read-only float array (memoized)."""
    if n_to < n_from:
        raise ValidationError("n_from must not exceed n_to")
    return _window_cached(spec, int(n_from), int(n_to))


def potential_value(spec: PotentialSpec, n: int) -> float:
    return float(potential_array(spec, n, n)[0])


def potential_window(spec: PotentialSpec, n_from: int, n_to: int) -> PotentialWindow:
    return PotentialWindow(offset=int(n_from), values=potential_array(spec, n_from, n_to).copy())


def approximant_spec(lam, convergent: Convergent, beta=0) -> PotentialSpec:
    return PotentialSpec.sturmian(lam, Fraction(convergent.p, convergent.q), beta)


def approximant_window(lam, convergent: Convergent, beta=0, periods: int = 1,
                       offset: int = 1) -> PotentialWindow:
    """``periods * q`` sites of the potential with theta replaced by p/q."""
    if convergent.q < 1:
        raise ValidationError("q must be >= 1")
    spec = approximant_spec(lam, convergent, beta)
    return potential_window(spec, offset, offset + periods * convergent.q - 1)


def _letters(window: PotentialWindow) -> bytes:
    _, codes = np.unique(window.values, return_inverse=True)
    if codes.max(initial=0) > 255:
        raise ValidationError("too many distinct letters")
    return codes.astype(np.uint8).tobytes()


def factor_complexity(window: PotentialWindow, n: int) -> int:
    """Number of distinct length-n factors of the window, read as a word."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    if len(window) < 10 * n:
        raise WindowTooShort(f"window of length {len(window)} is too short for n={n}")
    word = _letters(window)
    return len({word[i:i + n] for i in range(len(word) - n + 1)})


def letter_frequency(window: PotentialWindow, letter: float) -> float:
    return float(np.count_nonzero(window.values == letter)) / len(window)


def write_csv(window: PotentialWindow, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "V"])
        for n, v in zip(window.sites, window.values):
            w.writerow([int(n), repr(float(v))])
