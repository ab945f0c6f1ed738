"""Flat ``key = value`` experiment configuration.

One setting per line, ``#`` starts a comment, blank lines are ignored.
Keys are the field names of :class:`ExperimentConfig`; unknown keys and
bad values raise :class:`~evosid.errors.ConfigError` with the line number
and key.  ``to_text`` writes every key back out, which is what runs store
as their configuration snapshot.
"""

from __future__ import annotations

import dataclasses
import os
import typing
from dataclasses import dataclass, field, fields

from .errors import ConfigError

KINDS = ("g3p", "seismic")


def _doc(text: str, **kw):
    return field(metadata={"doc": text}, **kw)


@dataclass
class ExperimentConfig:
    kind: str = _doc("experiment kind: g3p or seismic", default="g3p")
    seed: int = _doc("master random seed", default=0)
    threads: int = _doc("worker threads for fitness evaluation", default=1)
    out: str = _doc("output directory", default="out")

    # engine
    population_size: int = _doc("individuals per generation", default=100)
    generations: int = _doc("maximum number of generations", default=50)
    tournament_size: int = _doc("tournament size", default=4)
    crossover_rate: float = _doc("probability of crossover per pair", default=0.9)
    mutation_rate: float = _doc("probability of mutation per offspring", default=0.2)
    elite_count: int = _doc("best individuals copied unchanged", default=1)
    max_evaluations: typing.Optional[int] = _doc("evaluation budget, 'none' for unlimited", default=None)

    # grammar and symbolic regression
    grammar: str = _doc("dimensional or untyped", default="dimensional")
    variables: str = _doc(
        "space-separated name:(i,j,k) inputs",
        default="d:(0,1,0) v:(0,1,-1) E:(1,-1,-2) eta:(1,-1,-1)",
    )
    target: str = _doc("name:(i,j,k) of the regressed quantity", default="F:(1,1,-2)")
    exponent_min: int = _doc("lowest unit exponent in the grammar", default=-2)
    exponent_max: int = _doc("highest unit exponent in the grammar", default=2)
    unary: str = _doc("comma-separated unary functions (exp,log,sin,cos,tanh), empty for none", default="")
    constants: bool = _doc("allow numeric constants", default=True)
    max_depth: int = _doc("derivation-tree depth limit", default=8)
    ramped: bool = _doc("ramp initial depth budgets up to max_depth", default=True)
    const_sigma: float = _doc("std-dev of constant perturbation", default=1.0)
    data: str = _doc("dataset CSV; empty to sample the planted benchmark", default="")
    n_rows: int = _doc("benchmark rows", default=30)
    noise_sigma: float = _doc("benchmark target noise", default=0.0)
    c1: float = _doc("benchmark coefficient of E*d*d", default=1.0)
    c2: float = _doc("benchmark coefficient of eta*d*v", default=1.0)
    data_seed: int = _doc("seed of the benchmark sample", default=0)

    # seismic
    case: str = _doc("toy model: two_layer or four_region", default="two_layer")
    true_model: str = _doc("hidden model genotype CSV overriding the toy model", default="")
    observed: str = _doc("directory of observed shot CSVs; empty to synthesize", default="")
    grid: int = _doc("cells per side; 0 for the case default", default=0)
    width: float = _doc("model width and depth in m; 0 for the case default", default=0.0)
    n_shots: int = _doc("number of shots", default=3)
    n_receivers: int = _doc("number of receivers", default=16)
    dt: float = _doc("time step in s", default=0.0025)
    n_steps: int = _doc("time steps per shot; 0 for the case default", default=0)
    peak_frequency: float = _doc("Ricker peak frequency in Hz", default=6.0)
    v_min: float = _doc("lowest site velocity in m/s", default=1500.0)
    v_max: float = _doc("highest site velocity in m/s", default=6000.0)
    sigma_xy: float = _doc("site position jitter", default=0.1)
    sigma_v: float = _doc("site velocity jitter in m/s", default=300.0)
    fitness: str = _doc("ls, semblance or alternate", default="alternate")
    s_gens: int = _doc("semblance generations per cycle", default=7)
    l_gens: int = _doc("LS generations per cycle", default=3)
    schedule_bounds: bool = _doc("enforce s_gens in [5,10] and l_gens in [2,5]", default=True)
    ramp_generations: int = _doc("generations to ramp shots from 1 to all; 0 disables", default=0)
    max_stretch: float = _doc("moveout stretch mute", default=0.5)
    window: int = _doc("semblance window in depth rows", default=5)
    energy_floor: float = _doc("relative energy below which a window is skipped", default=1e-3)

    def validate(self, base_dir: str = ".") -> None:
        """Range checks and file existence; raises :class:`ConfigError`."""

        def bad(key, msg):
            raise ConfigError(msg, key=key)

        if self.kind not in KINDS:
            bad("kind", f"expected one of {KINDS}, got {self.kind!r}")
        if self.grammar not in ("dimensional", "untyped"):
            bad("grammar", f"expected dimensional or untyped, got {self.grammar!r}")
        if self.fitness not in ("ls", "semblance", "alternate"):
            bad("fitness", f"expected ls, semblance or alternate, got {self.fitness!r}")
        if self.case not in ("two_layer", "four_region"):
            bad("case", f"expected two_layer or four_region, got {self.case!r}")
        for key in ("threads", "population_size", "generations", "tournament_size", "max_depth",
                    "n_rows", "n_shots", "n_receivers"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        for key in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                bad(key, "must lie in [0, 1]")
        if not 0 <= self.elite_count < self.population_size:
            bad("elite_count", "must satisfy 0 <= elite_count < population_size")
        if self.max_evaluations is not None and self.max_evaluations < 0:
            bad("max_evaluations", "must be >= 0")
        if self.exponent_min > 0 or self.exponent_max < 0:
            bad("exponent_min", "exponent range must contain 0")
        for key in ("dt", "peak_frequency", "v_min", "v_max", "sigma_v"):
            if getattr(self, key) <= 0:
                bad(key, "must be positive")
        if self.v_min > self.v_max:
            bad("v_min", "must not exceed v_max")
        if self.s_gens < 1 or self.l_gens < 1:
            bad("s_gens" if self.s_gens < 1 else "l_gens", "must be >= 1")
        if self.fitness == "alternate" and self.schedule_bounds:
            if not 5 <= self.s_gens <= 10:
                bad("s_gens", "must lie in [5, 10] (set schedule_bounds = false to lift)")
            if not 2 <= self.l_gens <= 5:
                bad("l_gens", "must lie in [2, 5] (set schedule_bounds = false to lift)")
        for key in PATH_KEYS:
            path = getattr(self, key)
            if path and not os.path.exists(os.path.join(base_dir, path)):
                bad(key, f"file not found: {path}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"# {f.metadata['doc']}")
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(text: str, kind) -> object:
    optional = typing.get_origin(kind) is typing.Union
    if optional:
        if text.lower() in ("none", ""):
            return None
        kind = next(a for a in typing.get_args(kind) if a is not type(None))
    if kind is bool:
        low = text.lower()
        if low in _TRUE:
            return True
        if low in _FALSE:
            return False
        raise ValueError(f"expected true or false, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


_HINTS = typing.get_type_hints(ExperimentConfig)
KEYS = tuple(f.name for f in fields(ExperimentConfig))
PATH_KEYS = ("data", "true_model", "observed")


def parse_config(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines over ``base`` (defaults when omitted)."""
    values = {}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError("expected 'key = value'", line=lineno, key=key or None)
        if key not in _HINTS:
            raise ConfigError("unknown key", line=lineno, key=key)
        if key in seen:
            raise ConfigError(f"already set on line {seen[key]}", line=lineno, key=key)
        seen[key] = lineno
        try:
            values[key] = _convert(val.strip(), _HINTS[key])
        except ValueError as exc:
            raise ConfigError(f"bad value: {exc}", line=lineno, key=key) from None
    return dataclasses.replace(base or ExperimentConfig(), **values)


def load_config(path: str) -> ExperimentConfig:
    """Read and validate a config file; relative data paths resolve against its directory."""
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc.message}", line=exc.line, key=exc.key) from None
    base_dir = os.path.dirname(os.path.abspath(path))
    try:
        cfg.validate(base_dir)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc.message}", line=_line_of(text, exc.key), key=exc.key) from None
    paths = {k: os.path.join(base_dir, getattr(cfg, k)) for k in PATH_KEYS if getattr(cfg, k)}
    return dataclasses.replace(cfg, **paths)


def _line_of(text: str, key: str | None) -> int | None:
    if key is None:
        return None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.split("#", 1)[0].partition("=")[0].strip() == key:
            return lineno
    return None
