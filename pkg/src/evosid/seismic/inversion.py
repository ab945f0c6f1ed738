"""Velocity-model inversion with Voronoi genotypes.

Two fitness functions drive the search: the seismogram misfit (``ls``),
which needs a forward solve per evaluation, and the gather semblance
(``semblance``), which only reads the observed data.  Semblance alone is
cheap but admits models that align the gathers while being physically
wrong; alternating it with the misfit keeps the search honest.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from ..engine import EngineConfig, Problem, RunResult, run
from ..voronoi import (
    VelocityGrid,
    VoronoiGenotype,
    VoronoiParams,
    geometric_crossover,
    mutate_sites,
    random_genotype,
    rasterize,
)
from .fitness import GatherParams, default_midpoints, fitness_ls, semblance_fitness
from .solver import AcquisitionGeometry, Seismogram, Wavelet, forward_model

SEMBLANCE = "semblance"
LS = "ls"

S_GENS_BOUNDS = (5, 10)
L_GENS_BOUNDS = (2, 5)


def alternating_selector(
    s_gens: int,
    l_gens: int,
    s_bounds: tuple[int, int] | None = S_GENS_BOUNDS,
    l_bounds: tuple[int, int] | None = L_GENS_BOUNDS,
) -> Callable[[int], str]:
    """Periodic schedule: ``s_gens`` semblance generations, then ``l_gens`` LS ones.

    Pass ``None`` as a bound to lift it.

    >>> sel = alternating_selector(7, 3)
    >>> sel(0), sel(7), sel(10)
    ('semblance', 'ls', 'semblance')
    """
    for name, val, bounds in (("s_gens", s_gens, s_bounds), ("l_gens", l_gens, l_bounds)):
        if val < 1:
            raise ValueError(f"{name} must be >= 1, got {val}")
        if bounds is not None and not bounds[0] <= val <= bounds[1]:
            raise ValueError(f"{name}={val} outside [{bounds[0]}, {bounds[1]}]")
    period = s_gens + l_gens

    def select(generation: int) -> str:
        return SEMBLANCE if generation % period < s_gens else LS

    return select


def shot_ramp(n_shots: int, ramp_generations: int) -> Callable[[int], int]:
    """Number of shots in use at a generation, growing linearly from 1 to ``n_shots``."""
    if ramp_generations <= 0 or n_shots <= 1:
        return lambda generation: n_shots

    def count(generation: int) -> int:
        frac = min(generation / ramp_generations, 1.0)
        return 1 + int(round(frac * (n_shots - 1)))

    return count


@dataclass(frozen=True)
class SeismicCase:
    """A synthetic experiment: hidden model, acquisition and its observed data."""

    true_model: VelocityGrid
    geometry: AcquisitionGeometry
    wavelet: Wavelet
    observed: Seismogram
    true_genotype: VoronoiGenotype | None = None
    gather: GatherParams = GatherParams()
    midpoints: tuple[float, ...] = ()

    @classmethod
    def synthesize(
        cls,
        true_model: VelocityGrid,
        geometry: AcquisitionGeometry,
        wavelet: Wavelet,
        true_genotype: VoronoiGenotype | None = None,
        gather: GatherParams = GatherParams(),
    ) -> "SeismicCase":
        obs = forward_model(true_model, geometry, wavelet)
        return cls(true_model, geometry, wavelet, obs, true_genotype, gather, tuple(default_midpoints(obs, gather)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.true_model.nx, self.true_model.ny

    def model_of(self, g: VoronoiGenotype) -> VelocityGrid:
        return rasterize(g, self.true_model.nx, self.true_model.ny, self.true_model.extent)

    def ls(self, model: VelocityGrid, shots=None) -> float:
        geom, obs = self.geometry, self.observed
        if shots is not None:
            geom = geom.with_shots([geom.shots[k] for k in shots])
            obs = obs.select_shots(shots)
        return fitness_ls(forward_model(model, geom, self.wavelet), obs)

    def semblance(self, model: VelocityGrid, shots=None) -> float:
        """Mean semblance over the case's midpoints (higher is better)."""
        z = self.geometry.depths(model.dz)[0]
        return 1.0 - semblance_fitness(
            model, self.observed, self.midpoints, self.wavelet.recorded_delay, z, self.gather, shots
        )


def _surface_geometry(width: float, n_shots: int, n_receivers: int, h: float, dt: float, n_steps: int) -> AcquisitionGeometry:
    # stay clear of the side sponges' influence on the first and last cells
    shots = tuple(width * (k + 1) / (n_shots + 1) for k in range(n_shots))
    receivers = tuple(np.linspace(h + 2.5, width - h - 2.5, n_receivers))
    return AcquisitionGeometry(shots, receivers, dt, n_steps * dt)


def two_layer_case(
    n: int = 40,
    width: float = 1000.0,
    v_top: float = 2000.0,
    v_bottom: float = 3000.0,
    interface: float = 0.5,
    n_shots: int = 3,
    n_receivers: int = 16,
    dt: float = 0.0025,
    n_steps: int = 600,
    peak_frequency: float = 6.0,
) -> SeismicCase:
    """Flat interface at ``interface`` (fraction of the depth) in an ``n`` x ``n`` grid.

    The hidden model is the rasterization of two sites stacked vertically,
    so it is exactly representable by the genotype.
    """
    top = interface / 2
    bottom = (1 + interface) / 2
    genotype = VoronoiGenotype([[0.5, top, v_top], [0.5, bottom, v_bottom]], 1500.0, 6000.0)
    model = rasterize(genotype, n, n, (width, width))
    geom = _surface_geometry(width, n_shots, n_receivers, width / n, dt, n_steps)
    return SeismicCase.synthesize(model, geom, Wavelet(peak_frequency), genotype)


FOUR_REGION_SITES = (
    (0.25, 0.15, 1800.0),
    (0.75, 0.3, 2200.0),
    (0.3, 0.65, 2700.0),
    (0.8, 0.85, 3300.0),
)


def four_region_case(
    n: int = 20,
    width: float = 500.0,
    sites=FOUR_REGION_SITES,
    n_shots: int = 3,
    n_receivers: int = 16,
    dt: float = 0.0025,
    n_steps: int = 400,
    peak_frequency: float = 6.0,
) -> SeismicCase:
    """Small Voronoi model with four velocity regions."""
    genotype = VoronoiGenotype(sites, 1500.0, 6000.0)
    model = rasterize(genotype, n, n, (width, width))
    geom = _surface_geometry(width, n_shots, n_receivers, width / n, dt, n_steps)
    return SeismicCase.synthesize(model, geom, Wavelet(peak_frequency), genotype)


def relative_velocity_error(model: VelocityGrid, true_model: VelocityGrid) -> float:
    """Mean over cells of ``|v - v_true| / v_true``."""
    return float(np.mean(np.abs(model.velocities - true_model.velocities) / true_model.velocities))


FITNESS_MODES = ("ls", "semblance", "alternate")


def make_inversion_problem(
    case: SeismicCase,
    mode: str = "alternate",
    s_gens: int = 7,
    l_gens: int = 3,
    params: VoronoiParams = VoronoiParams(),
    ramp_generations: int = 0,
    bounds_check: bool = True,
) -> Problem[VoronoiGenotype]:
    """Engine problem for ``mode`` in ``ls``, ``semblance`` or ``alternate``.

    With ``ramp_generations > 0`` the number of shots in use grows linearly
    from 1 to all over that many generations; each shot count gets its own
    fitness labels (``ls@2`` and so on) so cached values are never mixed.
    """
    if mode not in FITNESS_MODES:
        raise ValueError(f"unknown fitness mode {mode!r}; expected one of {FITNESS_MODES}")
    n_shots = len(case.geometry.shots)
    ramp = shot_ramp(n_shots, ramp_generations)
    if mode == "alternate":
        if bounds_check:
            base = alternating_selector(s_gens, l_gens)
        else:
            base = alternating_selector(s_gens, l_gens, None, None)
    else:
        base = (lambda generation, m=mode: m)

    def label(kind: str, k: int) -> str:
        return kind if k == n_shots else f"{kind}@{k}"

    fitness: dict[str, Callable[[VoronoiGenotype], float]] = {}
    for k in range(1, n_shots + 1):
        shots = None if k == n_shots else list(range(k))
        fitness[label(LS, k)] = lambda g, s=shots: case.ls(case.model_of(g), s)
        fitness[label(SEMBLANCE, k)] = lambda g, s=shots: 1.0 - case.semblance(case.model_of(g), s)

    def selector(generation: int) -> str:
        return label(base(generation), ramp(generation))

    return Problem(
        init=lambda rng, i: random_genotype(rng, params),
        crossover=lambda a, b, rng: geometric_crossover(a, b, rng),
        mutate=lambda g, rng: mutate_sites(g, rng, params),
        fitness=fitness,
        selector=selector,
    )


def engine_config_for_budget(budget: int, population_size: int = 50, **kwargs) -> EngineConfig:
    """Engine settings whose generation count cannot exhaust before ``budget`` evaluations."""
    pop = max(2, min(population_size, budget)) if budget > 0 else population_size
    gens = max(1, budget)  # the evaluation budget, not the generation count, ends the run
    return EngineConfig(population_size=pop, generations=gens, max_evaluations=budget, **kwargs)


@dataclass
class ParasiteReport:
    """Semblance-only best versus the hidden model and an alternating run."""

    seed: int
    budget: int
    semblance_best: float
    semblance_true: float
    ls_best: float
    ls_alternating: float
    ls_true: float
    error_best: float
    error_alternating: float
    evaluations: int
    wall_time: float
    success: bool
    best: VoronoiGenotype = field(repr=False)
    alternating_best: VoronoiGenotype = field(repr=False)
    semblance_run: RunResult | None = field(default=None, repr=False)
    alternating_run: RunResult | None = field(default=None, repr=False)

    SEMBLANCE_SLACK = 0.02
    LS_FACTOR = 10.0

    def summary(self) -> dict:
        keys = (
            "seed", "budget", "semblance_best", "semblance_true", "ls_best", "ls_alternating",
            "ls_true", "error_best", "error_alternating", "evaluations", "wall_time", "success",
        )
        return {k: getattr(self, k) for k in keys}


def _best_under(result: RunResult, label: str, case: SeismicCase, fn) -> tuple[VoronoiGenotype, float]:
    if label in result.best_by_label:
        return result.best_by_label[label]
    return result.best, fn(case.model_of(result.best))


def find_parasite(
    case: SeismicCase,
    budget: int = 3000,
    seed: int = 0,
    s_gens: int = 7,
    l_gens: int = 3,
    population_size: int = 50,
    params: VoronoiParams = VoronoiParams(),
    threads: int = 1,
) -> ParasiteReport:
    """Search for a model that out-aligns the truth while fitting the data badly.

    Runs a semblance-only search and an alternating search with the same
    evaluation budget and seed.  Success means the semblance-only best is
    within 0.02 of the true model's semblance while its LS misfit is at least
    ten times that of the alternating run's best-LS individual.
    """
    t0 = time.perf_counter()
    cfg = engine_config_for_budget(budget, population_size, seed=seed, threads=threads)
    sem_run = run(cfg, make_inversion_problem(case, "semblance", params=params))
    alt_run = run(cfg, make_inversion_problem(case, "alternate", s_gens, l_gens, params=params))

    best = sem_run.best_by_label.get(SEMBLANCE, (sem_run.best, math.inf))[0]
    best_model = case.model_of(best)
    s_best = case.semblance(best_model)
    s_true = case.semblance(case.true_model)
    ls_best = case.ls(best_model)
    alt_best, ls_alt = _best_under(alt_run, LS, case, case.ls)
    ls_true = case.ls(case.true_model)
    success = (
        budget > 0
        and s_best >= s_true - ParasiteReport.SEMBLANCE_SLACK
        and ls_best >= ParasiteReport.LS_FACTOR * ls_alt
    )
    return ParasiteReport(
        seed=seed,
        budget=budget,
        semblance_best=s_best,
        semblance_true=s_true,
        ls_best=ls_best,
        ls_alternating=float(ls_alt),
        ls_true=ls_true,
        error_best=relative_velocity_error(best_model, case.true_model),
        error_alternating=relative_velocity_error(case.model_of(alt_best), case.true_model),
        evaluations=sem_run.evaluations + alt_run.evaluations,
        wall_time=time.perf_counter() - t0,
        success=bool(success),
        best=best,
        alternating_best=alt_best,
        semblance_run=sem_run,
        alternating_run=alt_run,
    )


def invert(
    case: SeismicCase,
    config: EngineConfig,
    mode: str = "alternate",
    s_gens: int = 7,
    l_gens: int = 3,
    params: VoronoiParams = VoronoiParams(),
    ramp_generations: int = 0,
) -> RunResult:
    """Run one inversion; the result's ``best`` is under the final label."""
    return run(config, make_inversion_problem(case, mode, s_gens, l_gens, params, ramp_generations))
