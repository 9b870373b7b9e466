import numpy as np
import pytest
from hypothesis import given, strategies as st

from zrplab.rates import (RateFunction, certify, constant, dump, equivalence_ratio_onesite,
                          from_spec, linear, load, regularize, staircase)


def brute_h1(vals, n0):
    # exhaustive double loop
    best = np.inf
    for n in range(len(vals)):
        for m in range(n + n0, len(vals)):
            best = min(best, vals[m] - vals[n])
    return best


def test_certify_linear():
    cert = certify(linear(), window=100)
    assert cert.h1 == (1.0, 1)
    assert cert.lip == 1.0
    assert cert.extends_to_infinity


def test_certify_constant_has_no_h1():
    cert = certify(constant())
    assert cert.h1 is None
    assert cert.lip == 1.0


def test_certify_staircase_matches_double_loop():
    c = staircase(2)
    cert = certify(c, window=50)
    vals = c.values(50)
    assert brute_h1(vals, 1) <= 0
    assert cert.h1 == (brute_h1(vals, 2), 2) == (2.0, 2)
    assert cert.lip == 2.0


def test_rejects_bad_tables():
    with pytest.raises(ValueError):
        RateFunction(np.array([0.0, -1.0, 2.0]), 1.0, "neg")
    with pytest.raises(ValueError):
        RateFunction(np.array([0.0, 1.0, 0.0]), 1.0, "zero")
    with pytest.raises(ValueError):
        RateFunction(np.array([1.0, 1.0]), 1.0, "c0")


def test_affine_tail():
    c = RateFunction(np.array([0.0, 1.0, 3.0]), 0.5, "t")
    assert c(5) == pytest.approx(3.0 + 1.5)
    np.testing.assert_allclose(c.values(4), [0, 1, 3, 3.5, 4.0])


def test_regularize_linear_is_identity():
    ct = regularize(linear(), 3)
    np.testing.assert_allclose(ct.values(50), np.arange(51.0), atol=1e-12)


def test_regularize_staircase_hand_values():
    ct = regularize(staircase(2), 2)
    assert ct(2) == pytest.approx(2.5)
    assert ct(3) == pytest.approx(3.5)
    assert ct(1) == pytest.approx(1.25)


def test_regularize_is_uniformly_increasing():
    c = staircase(2)
    ct = regularize(c, certify(c).n0)
    assert np.min(np.diff(ct.values(400))) > 0


def test_regularize_idempotent_on_affine():
    c = linear(2.0)
    once = regularize(c, 4)
    twice = regularize(once, 4)
    np.testing.assert_allclose(once.values(60), twice.values(60), atol=1e-12)


def test_equivalence_ratio():
    assert equivalence_ratio_onesite(linear(), 2, 60) == pytest.approx((1.0, 1.0))
    lo60, hi60 = equivalence_ratio_onesite(staircase(2), 2, 60)
    lo120, hi120 = equivalence_ratio_onesite(staircase(2), 2, 120)
    assert 0 < lo60 <= hi60 < np.inf
    # no drift as the window grows
    assert lo120 == pytest.approx(lo60, rel=1e-6)
    assert hi120 == pytest.approx(hi60, rel=1e-6)


def test_spec_round_trip(tmp_path):
    for spec in ("linear", "constant", "staircase:3", "linear:2.5"):
        c = from_spec(spec)
        dump(c, tmp_path / "r.txt")
        back = load(tmp_path / "r.txt")
        np.testing.assert_array_equal(back.table, c.table)
        assert back.tail_slope == c.tail_slope
    assert from_spec(str(tmp_path / "r.txt")).name == "r"
    with pytest.raises(ValueError):
        from_spec("nonsense")


def test_load_needs_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 0\n1 1\n")
    with pytest.raises(ValueError):
        load(p)


increments = st.lists(st.floats(0.05, 3.0), min_size=3, max_size=25)


@given(increments, st.integers(10, 40), st.integers(41, 80))
def test_certify_monotone_in_window(steps, w1, w2):
    c = RateFunction(np.concatenate([[0.0], np.cumsum(steps)]), 0.7, "rand")
    d1 = certify(c, window=w1, n0=1).delta
    d2 = certify(c, window=w2, n0=1).delta
    assert d2 <= d1 + 1e-12


@given(st.lists(st.floats(-1.0, 3.0), min_size=4, max_size=30))
def test_certificate_invariants(steps):
    # positive but not necessarily monotone
    vals = np.concatenate([[0.0], 0.5 + np.abs(np.cumsum(steps))])
    c = RateFunction(vals, 0.0, "rand")
    cert = certify(c, window=60)
    table = c.values(60)
    assert cert.lip >= np.max(np.abs(np.diff(table))) - 1e-12
    if cert.h1 is not None:
        delta, n0 = cert.h1
        assert delta > 0
        assert brute_h1(table, n0) >= delta - 1e-12


@given(st.lists(st.floats(0.2, 2.0), min_size=6, max_size=20), st.integers(1, 4))
def test_regularized_increase(steps, n0):
    # increasing rates satisfy the growth condition with any n0; the transform keeps them increasing
    c = RateFunction(np.concatenate([[0.0], np.cumsum(steps)]), 1.0, "inc")
    ct = regularize(c, n0)
    assert np.min(np.diff(ct.values(c.n_max + 10))) > 0
