import json
import math

import numpy as np
import pytest

from sturmlog.cfrac import Convergent
from sturmlog.errors import EmptyBands, ResolutionTooCoarse, ValidationError
from sturmlog.spectrum import (BandSet, approximant_bands, band_set, discriminant,
                               hausdorff_distance, periodic_operator_eigenvalues,
                               refine_into_spectrum, sample_energies)

HALF = Convergent(1, 2, 1)


def test_discriminant_examples():
    E = np.linspace(-3, 3, 13)
    assert discriminant(0, Convergent(0, 1, 0), 0, E) == pytest.approx(E)
    assert discriminant(1, HALF, 0, E) == pytest.approx(E ** 2 - E - 2)
    assert discriminant(1, HALF, 0, 0.5) == pytest.approx(-2.25)


def test_free_band():
    for q in (1, 2, 5, 13):
        bs = band_set(0.0, Convergent(1 if q > 1 else 0, q, 1), 0)
        assert len(bs.bands) == 1
        assert bs.bands[0] == pytest.approx((-2, 2), abs=1e-10)


def test_constant_shift():
    # p/q = 1/1: V = lam everywhere
    bs = band_set(0.7, Convergent(1, 1, 1), 0)
    assert bs.bands[0] == pytest.approx((-1.3, 2.7), abs=1e-10)


def test_period_two_edges():
    bs = band_set(1.0, HALF, 0)
    r = math.sqrt(17)
    expected = [((1 - r) / 2, 0.0), (1.0, (1 + r) / 2)]
    assert len(bs.bands) == 2
    for (l, u), (el, eu) in zip(bs.bands, expected):
        assert l == pytest.approx(el, abs=1e-10)
        assert u == pytest.approx(eu, abs=1e-10)


def test_period_two_eigensolve():
    bs = band_set(1.0, HALF, 0)
    inner, _ = periodic_operator_eigenvalues(1.0, HALF, 0, periods=1000)
    assert np.max(bs.distance(inner)) < 1e-2


def test_golden_approximant_structure(golden):
    for index in range(2, 9):
        bs = approximant_bands(1.0, golden, index)
        q = bs.approximant.q
        assert len(bs.bands) <= q
        lo, hi = bs.bands[0][0], bs.bands[-1][1]
        assert -3 <= lo and hi <= 3
        E = sample_energies(bs, 3 * q)
        with np.errstate(over="ignore"):
            assert np.all(np.abs(discriminant(1.0, bs.approximant, 0, E)) <= 2 + 1e-9)
        edges = np.array(bs.bands).ravel()
        assert np.all(np.abs(np.abs(discriminant(1.0, bs.approximant, 0, edges)) - 2) < 1e-6)


def test_eigensolve_cross_check(golden):
    bs = approximant_bands(1.0, golden, 6)
    inner, everything = periodic_operator_eigenvalues(1.0, bs.approximant, 0, periods=50)
    assert len(inner) > 0.8 * len(everything)
    assert np.max(bs.distance(inner)) < 1e-2


def test_beta_shift_keeps_band_set(golden):
    # a shift of beta by k p/q permutes one period cyclically: the spectrum is unchanged
    c = golden.convergents(6)[6]
    a = band_set(1.0, c, 0)
    b = band_set(1.0, c, (c.p % c.q) / c.q)
    assert hausdorff_distance(a, b) < 1e-9


def test_sample_energies_layout():
    single = BandSet(((-2.0, 2.0),), Convergent(0, 1, 0), 0.0, 0.0)
    assert sample_energies(single, 3) == pytest.approx([-4 / 3, 0, 4 / 3])
    two = BandSet(((-2.0, -1.0), (1.0, 2.0)), HALF, 1.0, 0.0)
    E = sample_energies(two, 4)
    assert (E < 0).sum() == 2 and (E > 0).sum() == 2
    thin = BandSet(((0.5, 0.5),), Convergent(0, 1, 0), 0.0, 0.0)
    assert sample_energies(thin, 1) == pytest.approx([0.5])
    with pytest.raises(EmptyBands):
        sample_energies(BandSet((), HALF, 1.0, 0.0), 3)
    with pytest.raises(ValidationError):
        sample_energies(single, 0)


def test_bandset_validation_and_json():
    with pytest.raises(ValidationError):
        BandSet(((0.0, 1.0), (0.5, 2.0)), HALF, 1.0, 0.0)
    with pytest.raises(ValidationError):
        BandSet(((0, 1), (2, 3), (4, 5)), HALF, 1.0, 0.0)
    bs = band_set(1.0, HALF, 0)
    d = json.loads(bs.dumps())
    assert set(d) == {"lambda", "p", "q", "beta", "bands", "total_bandwidth"}
    assert d["total_bandwidth"] == pytest.approx(bs.total_bandwidth)
    assert bs.contains([-1.0, 0.5, 2.0]).tolist() == [True, False, True]


def test_hausdorff_distance():
    a = BandSet(((0.0, 1.0),), Convergent(0, 1, 0), 0.0, 0.0)
    b = BandSet(((0.0, 0.2), (0.8, 1.0)), HALF, 0.0, 0.0)
    # the gap midpoint 0.5 of b lies in a and is 0.3 from b
    assert hausdorff_distance(a, b) == pytest.approx(0.3)
    assert hausdorff_distance(a, a) == 0.0


def test_resolution_too_coarse(golden):
    c = golden.convergents(9)[9]
    with pytest.raises(ResolutionTooCoarse):
        band_set(1.0, c, 0, resolution=0.5, max_refine=0)
    with pytest.raises(ValidationError):
        band_set(1.0, c, 0, resolution=-1.0)


def test_refine_into_spectrum_lands_in_bands(golden):
    E0 = sample_energies(approximant_bands(1.0, golden, 5), 6)
    E = refine_into_spectrum(1.0, golden, E0, 5, 12)
    fine = approximant_bands(1.0, golden, 12)
    assert np.all(fine.contains(E))
    assert np.all(np.abs(E - E0) < 0.2)
