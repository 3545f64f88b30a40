import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from sturmlog.cfrac import (Convergent, RotationNumber, convergents, density_statistic, expand,
                            exponential_growth_bound, reconstruct)
from sturmlog.errors import PrecisionExhausted, RationalInput, ValidationError


def test_golden_and_silver_terms(golden, silver):
    assert golden.terms_upto(6) == (1,) * 6
    assert silver.terms_upto(5) == (2,) * 5
    # quadratic expansion keeps going past the stored prefix
    assert golden.terms_upto(500)[-3:] == (1, 1, 1)


def test_expand_high_precision_values():
    with mpmath.workdps(60):
        g = (mpmath.sqrt(5) - 1) / 2
        s = mpmath.sqrt(2) - 1
    assert expand(g, 6, precision_digits=50) == [1] * 6
    assert expand(s, 5, precision_digits=50) == [2] * 5


def test_expand_string_uses_stated_digits():
    digits = "0.61803398874989484820458683436563811772030917980576"
    assert expand(digits, 40) == [1] * 40
    with pytest.raises(PrecisionExhausted) as exc:
        expand("0.6180339887", 40)
    assert 0 < exc.value.n < 40


def test_expand_rational_terminates():
    with pytest.raises(RationalInput) as exc:
        expand(0.5, 3)
    assert exc.value.terms == (2,)
    with pytest.raises(RationalInput) as exc:
        expand(Fraction(5, 8), 10)
    assert exc.value.terms == (1, 1, 1, 2)


@pytest.mark.parametrize("bad", [0, 1, 1.5, -0.2])
def test_expand_rejects_out_of_range(bad):
    with pytest.raises(ValidationError):
        expand(bad, 3)


def test_convergent_examples():
    cs = convergents((1, 1, 1, 1, 1))
    assert [c.q for c in cs] == [1, 1, 2, 3, 5, 8]
    assert [c.p for c in cs] == [0, 1, 1, 2, 3, 5]
    cs = convergents((2, 2))
    assert [(c.p, c.q) for c in cs] == [(0, 1), (1, 2), (2, 5)]
    assert convergents((7,))[1] == Convergent(1, 7, 1)


def test_convergents_are_best_approximations(golden):
    cs = golden.convergents(30)
    for c in cs[1:]:
        assert abs(c.fraction - Fraction(int(golden.fixed_point(60)), 10 ** 60)) < Fraction(1, c.q ** 2)
    # consecutive determinant identity
    for a, b in zip(cs, cs[1:]):
        assert abs(a.p * b.q - b.p * a.q) == 1


@given(st.lists(st.integers(1, 50), min_size=1, max_size=12).filter(lambda t: t[-1] >= 2))
def test_reconstruct_round_trip(terms):
    x = reconstruct(terms)
    assert x == convergents(terms)[-1].fraction
    with pytest.raises(RationalInput) as exc:
        expand(x, len(terms) + 1)
    assert list(exc.value.terms) == terms


def test_density_statistic():
    assert density_statistic((1, 1, 1, 1)) == 1.0
    assert density_statistic((1, 2, 3, 4)) == 2.5
    assert density_statistic((5, 1, 1, 1)) == 5.0


def test_exponential_growth_bound(golden):
    assert exponential_growth_bound(golden.convergents(20)) == pytest.approx((1 + math.sqrt(5)) / 2, rel=0.02)
    assert exponential_growth_bound([1, 2, 4, 8]) == pytest.approx(2.0)
    assert exponential_growth_bound(convergents((100,))) == pytest.approx(100.0)


def test_fixed_point_exact_for_quadratics(golden, silver):
    S = 10 ** 80
    g = golden.fixed_point(80)
    # g/S <= (sqrt5-1)/2 < (g+1)/S  <=>  (2g+S)^2 <= 5 S^2 < (2g+2+S)^2
    assert (2 * g + S) ** 2 <= 5 * S * S < (2 * g + 2 + S) ** 2
    s = silver.fixed_point(80)
    assert (s + S) ** 2 <= 2 * S * S < (s + 1 + S) ** 2


def test_rotation_number_validation():
    with pytest.raises(ValidationError):
        RotationNumber.from_quadratic(0, 4, 1)
    with pytest.raises(ValidationError):
        RotationNumber.named("bronze")
    r = RotationNumber.from_value("0.41421356237309504880168872420969807856967187537694", n_terms=20)
    assert r.terms == (2,) * 20
