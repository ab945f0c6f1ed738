"""Physical dimensions as bounded integer exponent vectors.

A unit is the tuple of exponents of the base dimensions, by default
(mass, length, time).  The Newton, kg.m/s^2, is ``Unit(1, 1, -2)``.
"""

from __future__ import annotations

import itertools
import numbers
import re
from dataclasses import dataclass
from typing import Iterator

from .errors import OutOfRangeError

BASE_DIMENSIONS = ("mass", "length", "time")


class Unit(tuple):
    """Immutable exponent vector.  ``Unit(1, 1, -2)`` is a force."""

    __slots__ = ()

    def __new__(cls, *exps: int) -> "Unit":
        if len(exps) == 1 and not isinstance(exps[0], numbers.Integral):
            exps = tuple(exps[0])
        for e in exps:
            if int(e) != e:
                raise TypeError(f"unit exponents must be integers, got {e!r}")
        return super().__new__(cls, (int(e) for e in exps))

    @classmethod
    def dimensionless(cls, ndim: int = 3) -> "Unit":
        return cls(*([0] * ndim))

    @property
    def is_dimensionless(self) -> bool:
        return not any(self)

    @property
    def ndim(self) -> int:
        return len(self)

    def __repr__(self) -> str:
        return f"Unit{format_unit(self)}"

    def __str__(self) -> str:
        return format_unit(self)


@dataclass(frozen=True)
class ExponentRange:
    """Inclusive integer range allowed for every exponent."""

    lo: int = -2
    hi: int = 2

    def __post_init__(self):
        if not self.lo <= 0 <= self.hi:
            raise ValueError(
                f"exponent range [{self.lo}, {self.hi}] must contain 0"
            )

    def __contains__(self, unit) -> bool:
        return all(self.lo <= e <= self.hi for e in unit)

    def check(self, unit: Unit) -> Unit:
        if unit not in self:
            raise OutOfRangeError(
                f"unit {format_unit(unit)} outside exponent range "
                f"[{self.lo}, {self.hi}]"
            )
        return unit

    def units(self, ndim: int = 3) -> Iterator[Unit]:
        """All representable units, in lexicographic order."""
        span = range(self.lo, self.hi + 1)
        for exps in itertools.product(span, repeat=ndim):
            yield Unit(*exps)

    def size(self, ndim: int = 3) -> int:
        return (self.hi - self.lo + 1) ** ndim


DEFAULT_RANGE = ExponentRange()


def _same_ndim(a: Unit, b: Unit) -> None:
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {a} vs {b}")


def unit_mul(a: Unit, b: Unit, rng: ExponentRange = DEFAULT_RANGE) -> Unit:
    """Unit of a product: exponents add."""
    _same_ndim(a, b)
    return rng.check(Unit(*(x + y for x, y in zip(a, b))))


def unit_div(a: Unit, b: Unit, rng: ExponentRange = DEFAULT_RANGE) -> Unit:
    """Unit of a quotient: exponents subtract."""
    _same_ndim(a, b)
    return rng.check(Unit(*(x - y for x, y in zip(a, b))))


def format_unit(u) -> str:
    return "(" + ",".join(str(int(e)) for e in u) + ")"


_UNIT_RE = re.compile(r"^\(\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\)$")


def parse_unit(text: str, rng: ExponentRange | None = DEFAULT_RANGE) -> Unit:
    """Inverse of :func:`format_unit`.  Pass ``rng=None`` to skip the range check."""
    m = _UNIT_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a unit: {text!r}")
    unit = Unit(*(int(p) for p in m.group(1).split(",")))
    if rng is not None:
        rng.check(unit)
    return unit
