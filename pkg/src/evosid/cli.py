"""Command-line experiment runner.

::

    evosid grammar gen|count|export ...
    evosid g3p run --config FILE [--seed N] [--out DIR] [--threads N]
    evosid seismic synth|invert|eval ...
    evosid demo parasite [--seed N]

Run subcommands write into ``--out``: the run log CSV, the best genotype,
``summary.json``, a ``config.cfg`` snapshot and, unless ``--no-plots`` is
given, PNG figures beside the CSV data they show.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, load_config
from .errors import ConfigError, EvosidError
from .units import ExponentRange

logger = logging.getLogger("evosid")


# -- helpers -------------------------------------------------------------------


def _write(path: str, text: str) -> str:
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _write_json(path: str, obj) -> str:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    for key in ("seed", "out", "threads", "fitness"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    cfg = cfg.replace(**over)
    cfg.validate()
    return cfg


def _bundle(cfg: ExperimentConfig) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    _write(os.path.join(cfg.out, "config.cfg"), cfg.to_text())
    return cfg.out


def _engine_config(cfg: ExperimentConfig):
    from .engine import EngineConfig

    return EngineConfig(
        population_size=cfg.population_size,
        generations=cfg.generations,
        tournament_size=cfg.tournament_size,
        crossover_rate=cfg.crossover_rate,
        mutation_rate=cfg.mutation_rate,
        elite_count=cfg.elite_count,
        seed=cfg.seed,
        threads=cfg.threads,
        max_evaluations=cfg.max_evaluations,
    )


# -- grammar -------------------------------------------------------------------


def _parse_variables(text: str):
    from .grammar import VariableSpec
    from .units import parse_unit

    out = []
    for item in text.split():
        name, sep, unit = item.partition(":")
        if not sep:
            raise ConfigError(f"{item!r} lacks a ':(i,j,k)' unit", key="variables")
        out.append(VariableSpec(name, parse_unit(unit, None)))
    return out


def _grammar_from_config(cfg: ExperimentConfig, untyped: bool | None = None):
    from .grammar import OperatorSet, generate_dimensional_grammar, generate_untyped_grammar
    from .units import parse_unit

    variables = _parse_variables(cfg.variables)
    tname, _, tunit = cfg.target.partition(":")
    target = parse_unit(tunit, None)
    unary = tuple(s.strip() for s in cfg.unary.split(",") if s.strip())
    ops = OperatorSet(unary=unary)
    if untyped if untyped is not None else cfg.grammar == "untyped":
        return generate_untyped_grammar(variables, ops, cfg.constants)
    rng = ExponentRange(cfg.exponent_min, cfg.exponent_max)
    return generate_dimensional_grammar(variables, target, rng, ops, cfg.constants)


def _grammar_source(args, cfg):
    from .grammar import import_grammar

    if getattr(args, "grammar", None):
        with open(args.grammar) as fh:
            return import_grammar(fh.read())
    return _grammar_from_config(cfg, True if getattr(args, "untyped", False) else None)


def cmd_grammar_gen(args) -> int:
    from .grammar import export_grammar

    cfg = _load(args)
    g = _grammar_from_config(cfg)
    out = _bundle(cfg)
    _write(os.path.join(out, "grammar.txt"), export_grammar(g))
    di = g.depth_index
    summary = {
        "nonterminals": len(g.nonterminals),
        "terminals": len(g.terminals),
        "productions": len(g.productions),
        "start_depth_index": di[g.start],
        "max_depth_index": max(v for v in di.values() if math.isfinite(v)),
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


def cmd_grammar_export(args) -> int:
    from .grammar import export_grammar

    cfg = _load(args)
    text = export_grammar(_grammar_source(args, cfg))
    if args.output and args.output != "-":
        _write(args.output, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_grammar_count(args) -> int:
    from .grammar import count_trees_by_depth

    cfg = _load(args)
    g = _grammar_source(args, cfg)
    depths = sorted(set(args.depths))
    if depths[0] < 0:
        raise ValueError("depths must be >= 0")
    levels = count_trees_by_depth(g, depths[-1])
    counts = [levels[d][g.start] for d in depths]
    series = {"grammar": counts}
    if args.compare:
        # the untyped counterpart of the same variables and operators
        u = _grammar_from_config(cfg, untyped=True)
        ul = count_trees_by_depth(u, depths[-1])
        series["untyped"] = [ul[d][u.start] for d in depths]
    rows = ["depth," + ",".join(series)]
    for i, d in enumerate(depths):
        rows.append(f"{d}," + ",".join(str(s[i]) for s in series.values()))
        print("\t".join([str(d)] + [str(s[i]) for s in series.values()]))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write(os.path.join(args.out, "counts.csv"), "\n".join(rows) + "\n")
        if not args.no_plots:
            from . import report

            report.tree_counts(depths, series, os.path.join(args.out, "counts.png"))
    return 0


# -- g3p -----------------------------------------------------------------------


def cmd_g3p_run(args) -> int:
    from .derivation import decode, tree_to_text
    from .engine import run
    from .symreg import Dataset, fitness_mse, make_g3p_problem, make_indentation_benchmark, predict

    cfg = _load(args)
    if cfg.kind != "g3p":
        raise ConfigError(f"g3p run needs kind = g3p, got {cfg.kind!r}", key="kind")
    grammar = _grammar_from_config(cfg)
    if cfg.data:
        with open(cfg.data) as fh:
            data = Dataset.from_csv(fh.read())
    else:
        data, _ = make_indentation_benchmark(cfg.n_rows, cfg.noise_sigma, cfg.data_seed, cfg.c1, cfg.c2)
    problem = make_g3p_problem(grammar, data, cfg.max_depth, cfg.const_sigma, ramped=cfg.ramped)
    result = run(_engine_config(cfg), problem)
    out = _bundle(cfg)
    result.log.write(os.path.join(out, "runlog.csv"))
    expr = decode(result.best)
    _write(os.path.join(out, "best.txt"), expr.text + "\n" + tree_to_text(result.best) + "\n")
    _write(os.path.join(out, "data.csv"), data.to_csv())
    try:
        pred = np.asarray(predict(expr, data), dtype=float)
    except EvosidError:
        pred = np.full(data.n_rows, np.nan)
    rows = ["target,prediction"] + [f"{t!r},{p!r}" for t, p in zip(data.target.tolist(), pred.tolist())]
    _write(os.path.join(out, "predictions.csv"), "\n".join(rows) + "\n")
    summary = {
        "best_expression": expr.text,
        "final_fitness": _finite_or_none(fitness_mse(expr, data)),
        "generations": len(result.log),
        "evaluations": result.evaluations,
        "wall_time": result.wall_time,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    if not args.no_plots:
        from . import report

        report.convergence(result.log, os.path.join(out, "convergence.png"), "G3P")
        report.predicted_vs_target(pred, data.target, os.path.join(out, "fit.png"), expr.text)
    print(f"best: {expr.text}")
    print(f"mse: {summary['final_fitness']}  evaluations: {result.evaluations}")
    return 0


# -- seismic -------------------------------------------------------------------


def _case_from_config(cfg: ExperimentConfig):
    from .seismic.fitness import GatherParams, default_midpoints
    from .seismic.inversion import SeismicCase, four_region_case, two_layer_case
    from .seismic.solver import AcquisitionGeometry, Seismogram, Wavelet
    from .voronoi import VoronoiGenotype, rasterize

    kw = dict(n_shots=cfg.n_shots, n_receivers=cfg.n_receivers, dt=cfg.dt, peak_frequency=cfg.peak_frequency)
    if cfg.grid:
        kw["n"] = cfg.grid
    if cfg.width:
        kw["width"] = cfg.width
    if cfg.n_steps:
        kw["n_steps"] = cfg.n_steps
    build = two_layer_case if cfg.case == "two_layer" else four_region_case
    gather = GatherParams(max_stretch=cfg.max_stretch, window=cfg.window, energy_floor=cfg.energy_floor)
    base = build(**kw)
    genotype, model = base.true_genotype, base.true_model
    if cfg.true_model:
        with open(cfg.true_model) as fh:
            genotype = VoronoiGenotype.from_csv(fh.read(), cfg.v_min, cfg.v_max)
        model = rasterize(genotype, model.nx, model.ny, model.extent)
    if cfg.observed:
        obs = Seismogram.read(cfg.observed)
        geom = AcquisitionGeometry(obs.shots, obs.receivers, obs.dt, obs.n_samples * obs.dt)
        return SeismicCase(model, geom, Wavelet(cfg.peak_frequency), obs, genotype, gather,
                           tuple(default_midpoints(obs, gather)))
    if cfg.true_model or gather != base.gather:
        return SeismicCase.synthesize(model, base.geometry, base.wavelet, genotype, gather)
    return base


def _voronoi_params(cfg: ExperimentConfig):
    from .voronoi import VoronoiParams

    return VoronoiParams(v_min=cfg.v_min, v_max=cfg.v_max, sigma_xy=cfg.sigma_xy, sigma_v=cfg.sigma_v)


def _kind_check(cfg, want="seismic"):
    if cfg.kind != want:
        raise ConfigError(f"this subcommand needs kind = {want}, got {cfg.kind!r}", key="kind")


def cmd_seismic_synth(args) -> int:
    cfg = _load(args)
    _kind_check(cfg)
    case = _case_from_config(cfg)
    out = _bundle(cfg)
    case.observed.write(os.path.join(out, "observed"))
    _write(os.path.join(out, "true_model.txt"), case.true_model.to_text())
    if case.true_genotype is not None:
        _write(os.path.join(out, "true_genotype.csv"), case.true_genotype.to_csv())
    summary = {
        "shots": list(case.geometry.shots),
        "receivers": list(case.geometry.receivers),
        "dt": case.geometry.dt,
        "n_steps": case.geometry.n_steps,
        "grid": [case.true_model.ny, case.true_model.nx],
        "extent": list(case.true_model.extent),
        "peak_frequency": case.wavelet.peak_frequency,
        "points_per_wavelength": case.wavelet.points_per_wavelength(
            float(case.true_model.velocities.min()), case.true_model.dx
        ),
        "semblance_true": case.semblance(case.true_model),
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    if not args.no_plots:
        from . import report

        report.velocity_models({"true model": case.true_model}, os.path.join(out, "true_model.png"))
        report.shot_gathers(case.observed, os.path.join(out, "observed.png"))
    print(f"wrote {len(case.geometry.shots)} shots to {os.path.join(out, 'observed')}")
    return 0


def cmd_seismic_invert(args) -> int:
    from .seismic.inversion import relative_velocity_error

    cfg = _load(args)
    _kind_check(cfg)
    case = _case_from_config(cfg)
    from .engine import run
    from .seismic.inversion import make_inversion_problem

    problem = make_inversion_problem(
        case, cfg.fitness, cfg.s_gens, cfg.l_gens, _voronoi_params(cfg), cfg.ramp_generations,
        bounds_check=cfg.schedule_bounds,
    )
    result = run(_engine_config(cfg), problem)
    out = _bundle(cfg)
    result.log.write(os.path.join(out, "runlog.csv"))
    label = "ls" if cfg.fitness != "semblance" else "semblance"
    best, best_fit = result.best_by_label.get(label, (result.best, result.best_fitness))
    model = case.model_of(best)
    _write(os.path.join(out, "best_genotype.csv"), best.to_csv())
    _write(os.path.join(out, "best_model.txt"), model.to_text())
    summary = {
        "fitness_mode": cfg.fitness,
        "reported_label": label,
        "final_fitness": _finite_or_none(best_fit),
        "ls": case.ls(model),
        "semblance": case.semblance(model),
        "relative_velocity_error": relative_velocity_error(model, case.true_model),
        "sites": len(best),
        "generations": len(result.log),
        "evaluations": result.evaluations,
        "wall_time": result.wall_time,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    if not args.no_plots:
        from . import report

        report.convergence(result.log, os.path.join(out, "convergence.png"), f"fitness: {cfg.fitness}")
        report.velocity_models(
            {"true": case.true_model, "best": model}, os.path.join(out, "models.png")
        )
    print(f"{label}: {summary['final_fitness']}  relative velocity error: {summary['relative_velocity_error']:.4f}")
    return 0


SCAN_SCALES = tuple(round(0.7 + 0.05 * k, 2) for k in range(13))


def cmd_seismic_eval(args) -> int:
    from .seismic.inversion import relative_velocity_error
    from .voronoi import VoronoiGenotype

    cfg = _load(args)
    _kind_check(cfg)
    case = _case_from_config(cfg)
    if args.model:
        with open(args.model) as fh:
            g = VoronoiGenotype.from_csv(fh.read(), cfg.v_min, cfg.v_max)
        model = case.model_of(g)
    else:
        model = case.true_model
    out = _bundle(cfg)
    summary = {
        "model": args.model or "true",
        "ls": case.ls(model),
        "semblance": case.semblance(model),
        "relative_velocity_error": relative_velocity_error(model, case.true_model),
    }
    if args.scan:
        values = [1.0 - case.semblance(model.scaled(s)) for s in SCAN_SCALES]
        rows = ["scale,one_minus_semblance"] + [f"{s!r},{v!r}" for s, v in zip(SCAN_SCALES, values)]
        _write(os.path.join(out, "scale_scan.csv"), "\n".join(rows) + "\n")
        summary["scan_argmin_scale"] = SCAN_SCALES[int(np.argmin(values))]
        if not args.no_plots:
            from . import report

            report.scale_scan(SCAN_SCALES, values, os.path.join(out, "scale_scan.png"))
    _write_json(os.path.join(out, "summary.json"), summary)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


def cmd_demo_parasite(args) -> int:
    from .seismic.inversion import find_parasite

    cfg = _load(args)
    if args.config is None:
        cfg = cfg.replace(kind="seismic")
    _kind_check(cfg)
    case = _case_from_config(cfg)
    budget = cfg.max_evaluations if cfg.max_evaluations is not None else 3000
    rep = find_parasite(
        case, budget, cfg.seed, cfg.s_gens, cfg.l_gens, cfg.population_size, _voronoi_params(cfg), cfg.threads
    )
    out = _bundle(cfg)
    summary = rep.summary()
    _write_json(os.path.join(out, "parasite_report.json"), summary)
    _write_json(os.path.join(out, "summary.json"), {
        "final_fitness": 1.0 - rep.semblance_best,
        "evaluations": rep.evaluations,
        "wall_time": rep.wall_time,
        "success": rep.success,
    })
    _write(os.path.join(out, "parasite_genotype.csv"), rep.best.to_csv())
    _write(os.path.join(out, "alternating_genotype.csv"), rep.alternating_best.to_csv())
    rep.semblance_run.log.write(os.path.join(out, "runlog_semblance.csv"))
    rep.alternating_run.log.write(os.path.join(out, "runlog_alternating.csv"))
    if not args.no_plots:
        from . import report

        report.velocity_models(
            {
                "true": case.true_model,
                "semblance only": case.model_of(rep.best),
                "alternating": case.model_of(rep.alternating_best),
            },
            os.path.join(out, "models.png"),
        )
        report.convergence(rep.semblance_run.log, os.path.join(out, "convergence_semblance.png"), "semblance only")
        report.convergence(rep.alternating_run.log, os.path.join(out, "convergence_alternating.png"), "alternating")
    print(
        f"semblance best/true: {rep.semblance_best:.4f}/{rep.semblance_true:.4f}  "
        f"LS best/alternating: {rep.ls_best:.4g}/{rep.ls_alternating:.4g}  success: {rep.success}"
    )
    return 0


# -- parser --------------------------------------------------------------------


def _run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--no-plots", action="store_true", help="skip PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evosid", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    top = parser.add_subparsers(dest="group", required=True)

    gram = top.add_parser("grammar", help="generate, count or export grammars").add_subparsers(
        dest="action", required=True
    )
    p = gram.add_parser("gen", help="generate the dimensional grammar of a config")
    _run_flags(p)
    p.set_defaults(func=cmd_grammar_gen)
    p = gram.add_parser("export", help="print a grammar in text form")
    p.add_argument("--config")
    p.add_argument("--grammar", help="grammar text file to read instead of generating")
    p.add_argument("--untyped", action="store_true", help="the unit-blind counterpart")
    p.add_argument("-o", "--output", help="file to write; stdout by default")
    p.set_defaults(func=cmd_grammar_export)
    p = gram.add_parser("count", help="count derivation trees by depth")
    p.add_argument("--config")
    p.add_argument("--grammar", help="grammar text file to read instead of generating")
    p.add_argument("--untyped", action="store_true", help="count the unit-blind counterpart")
    p.add_argument("--depths", type=int, nargs="+", required=True)
    p.add_argument("--compare", action="store_true", help="also count the untyped counterpart")
    p.add_argument("--out", help="directory for counts.csv and counts.png")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_grammar_count)

    g3p = top.add_parser("g3p", help="grammar-guided symbolic regression").add_subparsers(
        dest="action", required=True
    )
    p = g3p.add_parser("run", help="evolve an expression")
    _run_flags(p)
    p.set_defaults(func=cmd_g3p_run)

    seis = top.add_parser("seismic", help="velocity-model inversion").add_subparsers(dest="action", required=True)
    p = seis.add_parser("synth", help="synthesize observed data from the hidden model")
    _run_flags(p)
    p.set_defaults(func=cmd_seismic_synth)
    p = seis.add_parser("invert", help="invert observed data")
    _run_flags(p)
    p.add_argument("--fitness", choices=("ls", "semblance", "alternate"))
    p.set_defaults(func=cmd_seismic_invert)
    p = seis.add_parser("eval", help="score a model against the observed data")
    _run_flags(p)
    p.add_argument("--model", help="genotype CSV; the hidden model by default")
    p.add_argument("--scan", action="store_true", help="semblance over velocity scale factors 0.7 to 1.3")
    p.set_defaults(func=cmd_seismic_eval)

    demo = top.add_parser("demo", help="canned experiments").add_subparsers(dest="action", required=True)
    p = demo.add_parser("parasite", help="semblance-only versus alternating search")
    _run_flags(p)
    p.set_defaults(func=cmd_demo_parasite)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"evosid: config error: {exc}", file=sys.stderr)
        return 2
    except (EvosidError, ValueError, OSError) as exc:
        where = f"{args.group} {args.action}"
        print(f"evosid {where}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
