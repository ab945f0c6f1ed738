"""Generational evolutionary loop shared by the G3P and Voronoi problems.

Fitness is minimized.  A ``fitness_selector`` maps the generation index to
the label of the fitness function in force, which is how the alternating
semblance / least-squares schedule plugs in.

Randomness: every random decision draws from a stream seeded by
``(seed, generation, slot)``.  Fitness functions are deterministic, so the
run does not depend on how many threads evaluate it.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Generic, Mapping, Sequence, TypeVar

import numpy as np

from .errors import EvosidError

logger = logging.getLogger(__name__)

G = TypeVar("G")

WORST = math.inf

# stream slots beyond the population index
_SELECTION_SLOT = 1 << 20


@dataclass(frozen=True)
class EngineConfig:
    population_size: int = 100
    generations: int = 50
    tournament_size: int = 4
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    elite_count: int = 1
    seed: int = 0
    threads: int = 1
    max_evaluations: int | None = None

    def __post_init__(self):
        if self.population_size < 1 or self.generations < 1 or self.tournament_size < 1:
            raise ValueError("population_size, generations and tournament_size must be positive")
        if not 0 <= self.elite_count < self.population_size:
            raise ValueError("elite_count must satisfy 0 <= elite_count < population_size")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            raise ValueError("max_evaluations must be >= 0")


@dataclass
class Problem(Generic[G]):
    """Callbacks defining one optimization problem.

    ``fitness`` maps labels to functions of a genotype.  ``selector`` picks
    the label for a generation; the default uses the first label throughout.
    """

    init: Callable[[np.random.Generator, int], G]
    crossover: Callable[[G, G, np.random.Generator], tuple[G, G]]
    mutate: Callable[[G, np.random.Generator], G]
    fitness: Mapping[str, Callable[[G], float]]
    selector: Callable[[int], str] | None = None

    def label_for(self, generation: int) -> str:
        if self.selector is None:
            return next(iter(self.fitness))
        return self.selector(generation)


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best: float
    mean: float
    fitness_label: str
    evals: int


@dataclass
class RunLog:
    records: list[GenerationRecord] = field(default_factory=list)

    COLUMNS = ("generation", "best", "mean", "fitness_label", "evals")

    def append(self, rec: GenerationRecord) -> None:
        if self.records and rec.evals < self.records[-1].evals:
            raise ValueError("evaluation count must be non-decreasing")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.records:
            w.writerow([r.generation, repr(r.best), repr(r.mean), r.fitness_label, r.evals])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RunLog":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != cls.COLUMNS:
            raise ValueError("not a run log: bad header")
        log = cls()
        for row in rows[1:]:
            log.append(GenerationRecord(int(row[0]), float(row[1]), float(row[2]), row[3], int(row[4])))
        return log

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


@dataclass
class RunResult(Generic[G]):
    """Outcome of :func:`run`.

    ``best`` / ``best_fitness`` refer to the final generation under the
    final fitness label.  ``best_by_label`` keeps, for every label used, the
    best individual ever evaluated under it.
    """

    best: G
    best_fitness: float
    log: RunLog
    population: list[G]
    fitness: list[float]
    best_by_label: dict[str, tuple[G, float]]
    evaluations: int
    wall_time: float


def stream(seed: int, generation: int, slot: int) -> np.random.Generator:
    """Independent random stream for one (generation, slot) pair."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, generation, slot]))


def _safe(fn: Callable[[Any], float], g) -> float:
    try:
        f = float(fn(g))
    except (EvosidError, ArithmeticError, ValueError, OverflowError) as exc:
        logger.debug("evaluation failed: %s", exc)
        return WORST
    if math.isnan(f):
        return WORST
    return f


def _tournament(fit: Sequence[float], k: int, rng: np.random.Generator) -> int:
    idx = rng.integers(len(fit), size=k)
    best = int(idx[0])
    for i in idx[1:]:
        i = int(i)
        if fit[i] < fit[best]:
            best = i
    return best


def run(config: EngineConfig, problem: Problem[G], callback=None) -> RunResult[G]:
    """Run the generational loop.

    Each generation: evaluate individuals lacking a fitness under the
    current label, log, keep ``elite_count`` best, then fill the rest by
    tournament selection, crossover with probability ``crossover_rate`` and
    per-offspring mutation with probability ``mutation_rate``.  Evaluation
    failures score ``inf``.

    The loop stops after ``config.generations`` generations, or before a
    generation whose evaluations would exceed ``config.max_evaluations``.
    """
    t0 = time.perf_counter()
    n = config.population_size
    pop = [problem.init(stream(config.seed, 0, i), i) for i in range(n)]
    fit: list[float | None] = [None] * n
    fit_label: str | None = None
    evals = 0
    log = RunLog()
    best_by_label: dict[str, tuple[Any, float]] = {}
    executor = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    try:
        for gen in range(config.generations):
            label = problem.label_for(gen)
            if label != fit_label:
                fit = [None] * n
                fit_label = label
            todo = [i for i in range(n) if fit[i] is None]
            if config.max_evaluations is not None and evals + len(todo) > config.max_evaluations:
                if gen == 0:
                    # budget below one population: score nothing, report the initial draw
                    fit = [WORST] * n
                    log.append(GenerationRecord(gen, WORST, WORST, label, evals))
                break
            fn = problem.fitness[label]
            if executor is None:
                values = [_safe(fn, pop[i]) for i in todo]
            else:
                values = list(executor.map(lambda i: _safe(fn, pop[i]), todo))
            for i, v in zip(todo, values):
                fit[i] = v
            evals += len(todo)

            order = sorted(range(n), key=lambda i: (fit[i], i))
            b = order[0]
            prev = best_by_label.get(label)
            if prev is None or fit[b] < prev[1]:
                best_by_label[label] = (pop[b], fit[b])
            finite = [f for f in fit if math.isfinite(f)]
            mean = math.fsum(finite) / len(finite) if finite else WORST
            log.append(GenerationRecord(gen, fit[b], mean, label, evals))
            if callback is not None:
                callback(gen, pop, fit)
            if gen == config.generations - 1:
                break

            rng = stream(config.seed, gen + 1, _SELECTION_SLOT)
            new_pop = [pop[i] for i in order[: config.elite_count]]
            new_fit = [fit[i] for i in order[: config.elite_count]]
            slot = 0
            while len(new_pop) < n:
                i1 = _tournament(fit, config.tournament_size, rng)
                i2 = _tournament(fit, config.tournament_size, rng)
                vr = stream(config.seed, gen + 1, slot)
                slot += 1
                kids = [[pop[i1], fit[i1]], [pop[i2], fit[i2]]]
                if vr.random() < config.crossover_rate:
                    c1, c2 = problem.crossover(pop[i1], pop[i2], vr)
                    if c1 is not pop[i1]:
                        kids[0] = [c1, None]
                    if c2 is not pop[i2]:
                        kids[1] = [c2, None]
                for kid in kids:
                    if vr.random() < config.mutation_rate:
                        kid[0] = problem.mutate(kid[0], vr)
                        kid[1] = None
                for g_, f_ in kids:
                    if len(new_pop) < n:
                        new_pop.append(g_)
                        new_fit.append(f_)
            pop, fit = new_pop, new_fit
    finally:
        if executor is not None:
            executor.shutdown()

    scored = [f if f is not None else WORST for f in fit]
    b = min(range(n), key=lambda i: (scored[i], i))
    if not best_by_label and fit_label is not None:
        best_by_label[fit_label] = (pop[b], scored[b])
    return RunResult(
        best=pop[b],
        best_fitness=scored[b],
        log=log,
        population=list(pop),
        fitness=scored,
        best_by_label=best_by_label,
        evaluations=evals,
        wall_time=time.perf_counter() - t0,
    )
