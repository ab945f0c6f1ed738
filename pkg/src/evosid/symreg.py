"""Dimensioned symbolic regression on a synthetic indentation-style benchmark.

The planted law is a two-term force law

    F = c1 * E * d**2 + c2 * eta * d * v

with displacement ``d`` (m), its rate ``v`` (m/s), a modulus ``E`` (Pa) and
a viscosity ``eta`` (Pa.s); both terms are Newtons.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .derivation import (
    CONST_RANGE,
    Expression,
    Node,
    crossover,
    decode,
    evaluate,
    init_tree,
    mutate,
)
from .engine import WORST, Problem
from .errors import NonFiniteError
from .grammar import Grammar, VariableSpec, default_indentation_variables, NEWTON
from .units import Unit, format_unit, parse_unit


@dataclass(frozen=True)
class Dataset:
    """Fitness cases: one row of inputs and a target value per case."""

    variables: tuple[VariableSpec, ...]
    inputs: np.ndarray  # (rows, len(variables))
    target: np.ndarray  # (rows,)
    target_unit: Unit
    target_name: str = "F"

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != len(self.variables):
            raise ValueError(f"inputs must have shape (rows, {len(self.variables)})")
        if target.shape != (inputs.shape[0],):
            raise ValueError("target must have one value per row")
        if inputs.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 rows")
        inputs.setflags(write=False)
        target.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    def bindings(self) -> dict[str, np.ndarray]:
        return {v.name: self.inputs[:, k] for k, v in enumerate(self.variables)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            [f"{v.name}:{format_unit(v.unit)}" for v in self.variables]
            + [f"{self.target_name}:{format_unit(self.target_unit)}"]
        )
        for row, y in zip(self.inputs, self.target):
            w.writerow([repr(float(x)) for x in row] + [repr(float(y))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if len(rows) < 3:
            raise ValueError("dataset CSV needs a header and at least 2 rows")
        cols = []
        for cell in rows[0]:
            name, sep, unit = cell.partition(":")
            if not sep:
                raise ValueError(f"header cell {cell!r} lacks a ':(i,j,k)' unit")
            cols.append(VariableSpec(name.strip(), parse_unit(unit, None)))
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        return cls(tuple(cols[:-1]), data[:, :-1], data[:, -1], cols[-1].unit, cols[-1].name)


PLANTED_LAW = "c1*E*d*d + c2*eta*d*v"

DEFAULT_INPUT_RANGES = {
    "d": (0.5, 2.0),
    "v": (0.5, 2.0),
    "E": (1.0, 10.0),
    "eta": (1.0, 10.0),
}


def planted_law(c1: float, c2: float) -> str:
    return f"((({c1!r}*E)*(d*d))+(({c2!r}*eta)*(d*v)))"


def make_indentation_benchmark(
    n_rows: int = 30,
    noise_sigma: float = 0.0,
    seed: int = 0,
    c1: float = 1.0,
    c2: float = 1.0,
    ranges: dict[str, tuple[float, float]] | None = None,
) -> tuple[Dataset, str]:
    """Sample the planted force law at log-uniform random inputs.

    Returns the dataset and the planted expression text.  ``noise_sigma`` is
    the standard deviation of additive Gaussian noise on the target.
    """
    ranges = {**DEFAULT_INPUT_RANGES, **(ranges or {})}
    rng = np.random.default_rng(seed)
    variables = tuple(default_indentation_variables())
    cols = []
    for v in variables:
        lo, hi = ranges[v.name]
        if not 0 < lo <= hi:
            raise ValueError(f"range for {v.name} must be positive, got {(lo, hi)}")
        cols.append(np.exp(rng.uniform(math.log(lo), math.log(hi), n_rows)))
    x = np.column_stack(cols)
    d, vel, e, eta = x.T
    y = c1 * e * d * d + c2 * eta * d * vel
    if noise_sigma > 0:
        y = y + rng.normal(0.0, noise_sigma, n_rows)
    return Dataset(variables, x, y, NEWTON), planted_law(c1, c2)


def predict(e: Expression, data: Dataset) -> np.ndarray:
    out = evaluate(e, data.bindings())
    return np.broadcast_to(np.asarray(out, dtype=float), data.target.shape)


def fitness_mse(e: Expression, data: Dataset) -> float:
    """Mean squared error over the fitness cases; ``inf`` if evaluation fails."""
    try:
        pred = predict(e, data)
    except NonFiniteError:
        return WORST
    with np.errstate(over="ignore"):
        err = float(np.mean((pred - data.target) ** 2))
    return err if math.isfinite(err) else WORST


def make_g3p_problem(
    grammar: Grammar,
    data: Dataset,
    max_depth: int = 8,
    const_sigma: float = 1.0,
    const_range=CONST_RANGE,
    ramped: bool = True,
) -> Problem[Node]:
    """Wire a grammar and a dataset into an engine :class:`Problem`.

    With ``ramped`` the initial population cycles its depth budget from the
    start symbol's depth index up to ``max_depth``; otherwise every
    individual gets ``max_depth``.
    """
    di = grammar.depth_index
    lo = int(di[grammar.start])
    budgets = list(range(lo, max_depth + 1)) if ramped else [max_depth]

    def init(rng, i):
        return init_tree(grammar, di, budgets[i % len(budgets)], rng, const_range)

    def cx(a, b, rng):
        return crossover(a, b, grammar, di, max_depth, rng)

    def mut(t, rng):
        return mutate(t, grammar, di, max_depth, rng, const_sigma, const_range)

    def mse(t):
        return fitness_mse(decode(t), data)

    return Problem(init=init, crossover=cx, mutate=mut, fitness={"mse": mse})
