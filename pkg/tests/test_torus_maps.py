import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusdisc.torus_maps import (
    ANOSOV, IntegerLinearSpec, ShearTerm, TorusMapExpr, TrigShearSpec, builtin, eval_map,
    eval_map_array, load_map, wrap_unit,
)


def mp_shear(coeffs, t):
    out = mpmath.mpf(0)
    for a, f, phase in coeffs:
        fn = mpmath.cos if phase == "cos" else mpmath.sin
        out += mpmath.mpf(a[0]) / a[1] * fn(2 * mpmath.pi * f * t)
    return out


F1_P = [((1, 209), 17, "cos"), ((1, 471), 29, "sin"), ((-1, 703), 39, "cos")]
F1_Q = [((1, 287), 15, "cos"), ((1, 403), 31, "sin"), ((-1, 841), 41, "sin")]


def mp_f1(x, y):
    with mpmath.workdps(50):
        x, y = mpmath.mpf(x), mpmath.mpf(y)
        y = y + mp_shear(F1_P, x)
        y = y - mpmath.floor(y)
        x = x + mp_shear(F1_Q, y)
        x = x - mpmath.floor(x)
        return float(x), float(y)


def test_identity_is_empty_composition():
    assert eval_map(builtin("identity"), (0.3, 0.7)) == (0.3, 0.7)


def test_anosov_point():
    x, y = eval_map(builtin("anosov"), (0.2, 0.4))
    assert x == pytest.approx(0.8, abs=1e-15)
    assert y == pytest.approx(0.6, abs=1e-15)


def test_f1_origin_matches_high_precision():
    x, y = eval_map(builtin("f1"), (0.0, 0.0))
    ex, ey = mp_f1(0, 0)
    assert abs(y - (1 / 209 - 1 / 703)) < 1e-16
    assert abs(x - ex) < 1e-15 and abs(y - ey) < 1e-15


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_f1_random_points_match_high_precision(x, y):
    got = eval_map(builtin("f1"), (x, y))
    want = mp_f1(x, y)
    for g, w in zip(got, want):
        d = abs(g - w)
        assert min(d, 1 - d) < 1e-13


def test_builtin_structure():
    a = builtin("anosov")
    assert a.stages == (IntegerLinearSpec(ANOSOV),)
    assert a.is_integer_linear
    f1 = builtin("f1")
    P, Q = f1.stages
    assert (P.modify, P.read, Q.modify, Q.read) == (1, 0, 0, 1)
    assert [t.amplitude for t in P.terms] == [1 / 209, 1 / 471, -1 / 703]
    assert [t.amplitude for t in Q.terms] == [1 / 287, 1 / 403, -1 / 841]
    assert [t.frequency for t in Q.terms] == [15, 31, 41]


@pytest.mark.parametrize("one,two", [("f1", "f2"), ("g1", "g2")])
def test_second_map_applies_anosov_first(one, two):
    m1, m2 = builtin(one), builtin(two)
    assert m2.stages == builtin("anosov").stages + m1.stages
    x = (0.123, 0.456)
    assert eval_map(m2, x) == eval_map(m1, eval_map(builtin("anosov"), x))


def test_unknown_builtin_rejected():
    with pytest.raises(ValueError):
        builtin("f3")


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        eval_map(builtin("f1"), (0.1, 0.2, 0.3))


def test_invalid_stages_rejected():
    with pytest.raises(ValueError):
        TrigShearSpec(0, 0, (ShearTerm(0.1, 1),))
    with pytest.raises(ValueError):
        ShearTerm(0.1, 1, "tan")
    with pytest.raises(ValueError):
        IntegerLinearSpec(((2, 0), (0, 1)))
    with pytest.raises(ValueError):
        IntegerLinearSpec(((1.5, 0), (0, 1)))


def test_results_stay_in_unit_cube():
    pts = np.random.default_rng(1).random((2000, 2))
    for name in ("f1", "f2", "g1", "g2"):
        out = eval_map_array(builtin(name), pts)
        assert np.all(out >= 0) and np.all(out < 1)


@pytest.mark.parametrize("name", ["f1", "f2", "g1", "g2", "anosov"])
def test_array_eval_matches_scalar(name):
    m = builtin(name)
    pts = np.random.default_rng(2).random((300, 2))
    arr = eval_map_array(m, pts)
    for p, row in zip(pts, arr):
        assert tuple(row) == eval_map(m, tuple(p))


@pytest.mark.parametrize("name", ["f1", "g2", "anosov"])
def test_inverse_undoes_map(name):
    m = builtin(name)
    x = (0.31, 0.77)
    y = eval_map(m.inverse(), eval_map(m, x))
    for a, b in zip(x, y):
        d = abs(a - b)
        assert min(d, 1 - d) < 1e-12


def test_json_round_trip():
    m = builtin("g2")
    back = load_map(m.to_json())
    assert back == m
    assert load_map(json.loads(m.to_json())) == m


def test_then_composes_left_to_right():
    a, f = builtin("anosov"), builtin("f1")
    x = (0.4, 0.9)
    assert eval_map(a.then(f), x) == eval_map(f, eval_map(a, x))


def test_wrap_unit_never_returns_one():
    assert wrap_unit(-1e-300) == 0.0
    assert wrap_unit(1.0) == 0.0
    assert wrap_unit(-0.25) == 0.75
    assert 0 <= wrap_unit(-math.ulp(1.0) / 4) < 1


def test_higher_dimensional_shear():
    m = TorusMapExpr((TrigShearSpec(2, 0, (ShearTerm(0.5, 1, "cos"),)),), dim=3)
    assert eval_map(m, (0.0, 0.2, 0.1)) == (0.0, 0.2, 0.6)
