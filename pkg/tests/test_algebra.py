import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdesim import algebra
from sdesim.algebra import Monomial, UnsupportedLengthError
from sdesim.errors import InvalidParameterError
from sdesim.model import make_gbm, make_heston, make_langevin, make_linear2d
from sdesim.wiener import generate_bundles

words = st.lists(st.integers(0, 3), min_size=0, max_size=4).map(tuple)
d_star_blocks = st.lists(st.sampled_from([(0,), (1, 1), (2, 2), (3, 3)]), max_size=4)


def test_word_decomposition_examples():
    s = algebra.decompose("0")
    assert (s.z, s.d, s.n, s.in_D) == (1, 0, 1, True)
    s = algebra.decompose("1122")
    assert (s.z, s.d, s.n, s.in_D) == (0, 2, 2, True)
    assert not algebra.decompose("12").in_D
    assert algebra.decompose("").in_D
    with pytest.raises(InvalidParameterError):
        algebra.as_word("1a")


def test_expected_stratonovich_examples():
    assert algebra.expected_stratonovich("11", 0.05) == pytest.approx(0.025)
    assert algebra.expected_stratonovich("12", 3.0) == 0.0
    assert algebra.expected_stratonovich("1122") == Monomial(Fraction(1, 8), 2)


def test_strat_to_ito_examples():
    assert algebra.strat_to_ito("11") == [(1, (1, 1)), (Fraction(1, 2), (0,))]
    assert algebra.strat_to_ito("12") == [(1, (1, 2))]
    assert sorted(algebra.strat_to_ito("1122")) == sorted([
        (1, (1, 1, 2, 2)), (Fraction(1, 2), (0, 2, 2)), (Fraction(1, 2), (1, 1, 0)),
        (Fraction(1, 4), (0, 0))])
    assert algebra.strat_to_ito("2") == [(1, (2,))]
    with pytest.raises(UnsupportedLengthError):
        algebra.strat_to_ito("11111")


def test_expected_ito_examples():
    assert algebra.expected_ito("1", 2.0) == 0.0
    assert algebra.expected_ito("00") == Monomial(Fraction(1, 2), 2)
    assert algebra.expected_ito("000", 2.0) == pytest.approx(8 / 6)


def test_all_words_identity_exact():
    for w in algebra.all_words(3, 4):
        assert algebra.expected_stratonovich(w) == algebra.expected_stratonovich_via_ito(w), w


@given(words)
def test_identity_property(w):
    assert algebra.expected_stratonovich(w) == algebra.expected_stratonovich_via_ito(w)


@given(d_star_blocks)
def test_time_prefix_integrates(blocks):
    w = tuple(a for b in blocks for a in b)
    inner = algebra.expected_stratonovich(w)
    assert algebra.expected_stratonovich((0,) + w) == inner.integrate()


@given(d_star_blocks)
def test_d_star_words_count_blocks(blocks):
    w = tuple(a for b in blocks for a in b)
    s = algebra.decompose(w)
    assert s.in_D
    assert s.n == len(blocks)
    assert s.d == sum(1 for b in blocks if b != (0,))


def test_semigroup_examples():
    assert algebra.expand_generator_power(1, 1) == {(0,): 1, (1, 1): Fraction(1, 2)}
    assert algebra.expand_generator_power(1, 2) == {
        (0, 0): 1, (0, 1, 1): Fraction(1, 2), (1, 1, 0): Fraction(1, 2),
        (1, 1, 1, 1): Fraction(1, 4)}
    for d in (1, 2, 3):
        for k in range(5):
            rep = algebra.semigroup_coefficient_check(d, k)
            assert rep.ok and rep.count == (d + 1) ** k


def test_identity_suite_all_pass():
    suite = algebra.identity_suite()
    assert len(suite) > 100
    assert all(ok for _, ok in suite)


def test_mc_iterated_integrals():
    P, n, t = 10**5, 64, 1.0
    inc = generate_bundles(21, np.arange(P), 2, 0.0, t, n).increments
    vals = algebra.mc_iterated_integrals(["0", "11", "12", "00", "1122"], t, inc)
    assert np.allclose(vals[(0,)], t)
    assert np.allclose(vals[(0, 0)], t * t / 2)
    for w in ("11", "12", "1122"):
        v = vals[algebra.as_word(w)]
        se = v.std(ddof=1) / math.sqrt(P)
        assert abs(v.mean() - algebra.expected_stratonovich(w, t)) < 3 * se + 1e-12, w


def test_mc_iterated_integrals_are_stratonovich():
    # the trapezoid rule makes J_11 = W^2/2 path by path
    inc = generate_bundles(3, np.arange(10), 1, 0.0, 1.0, 16).increments
    v = algebra.mc_iterated_integrals(["11"], 1.0, inc)[(1, 1)]
    np.testing.assert_allclose(v, 0.5 * inc.sum(axis=-1)[:, 0] ** 2, rtol=1e-12)


def test_drift_conversion_examples():
    gbm = make_gbm(3.0, 1.4)
    assert algebra.ito_drift_to_strat(gbm, np.array([1.0]))[0] == pytest.approx(2.02)
    lang = make_langevin(3.0, 0.25)
    y = np.array([0.7])
    np.testing.assert_array_equal(algebra.ito_drift_to_strat(lang, y), lang.drift_ito(y))


@pytest.mark.parametrize("model", [make_gbm(0.3, 0.8), make_heston(), make_linear2d(),
                                   make_langevin(1.0, 2.0)], ids=lambda m: m.name)
def test_drift_round_trip(model):
    rs = np.random.default_rng(0)
    y = np.abs(rs.standard_normal((5, model.N))) + 0.1
    v0 = algebra.ito_drift_to_strat(model, y)
    np.testing.assert_allclose(algebra.strat_drift_to_ito(model, y, v0), model.drift_ito(y),
                               rtol=1e-13, atol=1e-15)


def test_finite_difference_jvp_agrees_with_analytic():
    from dataclasses import replace
    m = make_heston()
    fd = replace(m, jvp=None)
    y = np.array([[0.1, 0.09], [0.0, 0.2]])
    np.testing.assert_allclose(algebra.ito_correction(fd, y), algebra.ito_correction(m, y),
                               rtol=1e-7, atol=1e-10)
