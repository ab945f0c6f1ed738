import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evosid.errors import OutOfRangeError
from evosid.units import (
    DEFAULT_RANGE,
    ExponentRange,
    Unit,
    format_unit,
    parse_unit,
    unit_div,
    unit_mul,
)

exps = st.integers(-2, 2)
units = st.builds(Unit, exps, exps, exps)


def test_mul_examples():
    assert unit_mul(Unit(0, 1, -1), Unit(1, 0, -1)) == Unit(1, 1, -2)
    assert unit_mul(Unit(0, 0, 0), Unit(1, 1, -2)) == Unit(1, 1, -2)
    with pytest.raises(OutOfRangeError):
        unit_mul(Unit(2, 0, 0), Unit(1, 0, 0))


def test_div_examples():
    assert unit_div(Unit(1, 1, -2), Unit(0, 2, 0)) == Unit(1, -1, -2)
    assert unit_div(Unit(1, 1, -2), Unit(0, 0, 0)) == Unit(1, 1, -2)
    with pytest.raises(OutOfRangeError):
        unit_div(Unit(-2, 0, 0), Unit(1, 0, 0))


def test_format_and_parse():
    assert format_unit(Unit(1, 1, -2)) == "(1,1,-2)"
    assert parse_unit("(0,0,0)").is_dimensionless
    assert parse_unit(" ( 1, -1 ,-2 ) ") == Unit(1, -1, -2)
    with pytest.raises(OutOfRangeError):
        parse_unit("(3,0,0)")
    assert parse_unit("(3,0,0)", None) == Unit(3, 0, 0)
    for bad in ("1,1,-2", "(a,1,2)", "()", "(1.5,0,0)"):
        with pytest.raises(ValueError):
            parse_unit(bad)


def test_roundtrip_exhaustive():
    all_units = list(DEFAULT_RANGE.units())
    assert len(all_units) == 125 == DEFAULT_RANGE.size()
    for u in all_units:
        assert parse_unit(format_unit(u)) == u


def test_unit_constructor_forms():
    assert Unit([1, 2, 3]) == Unit(1, 2, 3)
    assert Unit(1) == (1,)
    with pytest.raises(TypeError):
        Unit(0.5, 0, 0)
    assert Unit.dimensionless(2) == (0, 0)
    assert Unit(1, 0, 0).ndim == 3


def test_range_must_contain_zero():
    with pytest.raises(ValueError):
        ExponentRange(1, 2)
    with pytest.raises(ValueError):
        ExponentRange(-2, -1)
    r = ExponentRange(0, 0)
    assert list(r.units(2)) == [Unit(0, 0)]


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        unit_mul(Unit(1, 0), Unit(1, 0, 0))


def _maybe(f, *args):
    try:
        return f(*args)
    except OutOfRangeError:
        return None


@given(units, units)
def test_mul_commutative(a, b):
    assert _maybe(unit_mul, a, b) == _maybe(unit_mul, b, a)


@given(units, units, units)
def test_mul_associative_when_in_range(a, b, c):
    ab, bc = _maybe(unit_mul, a, b), _maybe(unit_mul, b, c)
    if ab is None or bc is None:
        return
    assert _maybe(unit_mul, ab, c) == _maybe(unit_mul, a, bc)


@given(units, units)
def test_div_undoes_mul(a, b):
    p = _maybe(unit_mul, a, b)
    if p is not None:
        assert unit_div(p, b) == a


def test_mul_matches_bruteforce_range_check():
    r = ExponentRange(-1, 1)
    for a, b in itertools.product(r.units(2), repeat=2):
        raw = tuple(x + y for x, y in zip(a, b))
        ok = all(-1 <= e <= 1 for e in raw)
        if ok:
            assert unit_mul(a, b, r) == raw
        else:
            with pytest.raises(OutOfRangeError):
                unit_mul(a, b, r)
