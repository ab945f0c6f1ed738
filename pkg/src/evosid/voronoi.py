"""Variable-length Voronoi genotype for 2D velocity models.

A genotype is a list of sites ``(x, y, velocity)`` with ``x, y`` in the
unit square (``y`` grows downward) and each Voronoi cell carrying the
velocity of its site.  Rasterization maps the unit square onto the
physical extent of a :class:`VelocityGrid`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class VoronoiParams:
    v_min: float = 1500.0
    v_max: float = 6000.0
    sigma_xy: float = 0.1
    sigma_v: float = 300.0
    # jitter position, jitter velocity, insert site, delete site
    weights: tuple[float, float, float, float] = (0.3, 0.4, 0.15, 0.15)
    min_init_sites: int = 2
    max_init_sites: int = 8
    max_sites: int | None = None

    def __post_init__(self):
        if not 0 < self.v_min <= self.v_max:
            raise ValueError("need 0 < v_min <= v_max")
        if len(self.weights) != 4 or min(self.weights) < 0 or sum(self.weights) <= 0:
            raise ValueError("weights must be 4 non-negative numbers with a positive sum")
        if not 1 <= self.min_init_sites <= self.max_init_sites:
            raise ValueError("need 1 <= min_init_sites <= max_init_sites")
        if self.max_sites is not None and self.max_sites < self.max_init_sites:
            raise ValueError("max_sites must be >= max_init_sites")


class VoronoiGenotype:
    """Immutable ``(n, 3)`` array of sites with its velocity bounds."""

    __slots__ = ("sites", "v_min", "v_max")

    def __init__(self, sites, v_min: float = 1500.0, v_max: float = 6000.0):
        arr = np.array(sites, dtype=float).reshape(-1, 3)
        if arr.shape[0] < 1:
            raise ValueError("a genotype needs at least one site")
        if np.any(arr[:, :2] < 0) or np.any(arr[:, :2] > 1):
            raise ValueError("site coordinates must lie in [0, 1]")
        if np.any(arr[:, 2] < v_min) or np.any(arr[:, 2] > v_max):
            raise ValueError(f"site velocities must lie in [{v_min}, {v_max}]")
        arr.setflags(write=False)
        self.sites = arr
        self.v_min = float(v_min)
        self.v_max = float(v_max)

    def __len__(self) -> int:
        return self.sites.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoronoiGenotype):
            return NotImplemented
        return (
            self.v_min == other.v_min
            and self.v_max == other.v_max
            and np.array_equal(self.sites, other.sites)
        )

    def __hash__(self):
        return hash(self.sites.tobytes())

    def __repr__(self) -> str:
        return f"VoronoiGenotype({len(self)} sites)"

    def with_sites(self, sites) -> "VoronoiGenotype":
        return VoronoiGenotype(sites, self.v_min, self.v_max)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "velocity"])
        for x, y, v in self.sites:
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, v_min: float = 1500.0, v_max: float = 6000.0) -> "VoronoiGenotype":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["x", "y", "velocity"]:
            raise ValueError("genotype CSV must start with the header x,y,velocity")
        return cls([[float(c) for c in r] for r in rows[1:] if r], v_min, v_max)


@dataclass(frozen=True)
class VelocityGrid:
    """Cell velocities on a regular grid.

    ``velocities[j, i]`` is the cell at depth row ``j`` and column ``i``;
    ``extent`` is (width, depth) in meters.
    """

    velocities: np.ndarray
    extent: tuple[float, float] = (1000.0, 1000.0)

    def __post_init__(self):
        v = np.array(self.velocities, dtype=float)
        if v.ndim != 2 or min(v.shape) < 1:
            raise ValueError("velocities must be a non-empty 2D array")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("velocities must be positive and finite")
        v.setflags(write=False)
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "extent", (float(self.extent[0]), float(self.extent[1])))

    @property
    def nx(self) -> int:
        return self.velocities.shape[1]

    @property
    def ny(self) -> int:
        return self.velocities.shape[0]

    @property
    def dx(self) -> float:
        return self.extent[0] / self.nx

    @property
    def dz(self) -> float:
        return self.extent[1] / self.ny

    def scaled(self, factor: float) -> "VelocityGrid":
        return VelocityGrid(self.velocities * factor, self.extent)

    def to_text(self) -> str:
        buf = io.StringIO()
        np.savetxt(buf, self.velocities, fmt="%.6f")
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, extent=(1000.0, 1000.0)) -> "VelocityGrid":
        return cls(np.loadtxt(io.StringIO(text), ndmin=2), extent)


def cell_centers(nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (x, y) coordinates of cell centers, each shaped (ny, nx)."""
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    return np.meshgrid(xs, ys)


def rasterize(g: VoronoiGenotype, nx: int, ny: int, extent=(1000.0, 1000.0)) -> VelocityGrid:
    """Give every cell the velocity of the site nearest its center.

    Distances are Euclidean in the unit square; ties go to the lowest site
    index.
    """
    cx, cy = cell_centers(nx, ny)
    s = g.sites
    d2 = (cx[..., None] - s[:, 0]) ** 2 + (cy[..., None] - s[:, 1]) ** 2
    nearest = np.argmin(d2, axis=-1)
    return VelocityGrid(s[nearest, 2], extent)


def random_genotype(rng: np.random.Generator, params: VoronoiParams = VoronoiParams()) -> VoronoiGenotype:
    n = int(rng.integers(params.min_init_sites, params.max_init_sites + 1))
    xy = rng.random((n, 2))
    v = rng.uniform(params.v_min, params.v_max, n)
    return VoronoiGenotype(np.column_stack([xy, v]), params.v_min, params.v_max)


def side_of_line(xy: np.ndarray, point, angle: float) -> np.ndarray:
    """True for points strictly on the positive side of the line."""
    normal = np.array([-np.sin(angle), np.cos(angle)])
    return (np.asarray(xy)[:, :2] - np.asarray(point)) @ normal > 0


def exchange(a: VoronoiGenotype, b: VoronoiGenotype, point, angle: float) -> tuple[np.ndarray, np.ndarray]:
    """Site arrays of the two children before any empty-child repair.

    Child 1 takes the sites of ``a`` strictly on the positive side and the
    sites of ``b`` on the other side; child 2 takes the rest.
    """
    pa = side_of_line(a.sites, point, angle)
    pb = side_of_line(b.sites, point, angle)
    c1 = np.vstack([a.sites[pa], b.sites[~pb]])
    c2 = np.vstack([a.sites[~pa], b.sites[pb]])
    return c1, c2


def geometric_crossover(
    a: VoronoiGenotype,
    b: VoronoiGenotype,
    rng: np.random.Generator,
    info: dict | None = None,
) -> tuple[VoronoiGenotype, VoronoiGenotype]:
    """Cut both parents with one random line and swap the sites on one side.

    The line passes through a uniform point of the unit square at a uniform
    angle in [0, 2pi).  A child left without sites inherits one site drawn
    uniformly from a uniformly chosen parent.  If ``info`` is given it
    receives the line and which children were repaired.
    """
    point = rng.random(2)
    angle = float(rng.uniform(0.0, 2 * np.pi))
    c1, c2 = exchange(a, b, point, angle)
    repaired = []
    kids = []
    for c in (c1, c2):
        if len(c) == 0:
            donor = (a, b)[int(rng.integers(2))]
            c = donor.sites[int(rng.integers(len(donor))), None]
            repaired.append(True)
        else:
            repaired.append(False)
        kids.append(a.with_sites(c))
    if info is not None:
        info.update(point=point, angle=angle, repaired=tuple(repaired))
    return kids[0], kids[1]


MUTATIONS = ("jitter_xy", "jitter_v", "insert", "delete")


def mutate_sites(
    g: VoronoiGenotype,
    rng: np.random.Generator,
    params: VoronoiParams = VoronoiParams(),
    kind: str | None = None,
) -> VoronoiGenotype:
    """Apply one site mutation, chosen by ``params.weights`` unless ``kind`` is given.

    Position and velocity jitters are Gaussian and clamped to the bounds.
    Deleting the last site, or inserting past ``params.max_sites``, leaves
    the genotype unchanged.
    """
    if kind is None:
        w = np.asarray(params.weights, dtype=float)
        kind = MUTATIONS[int(rng.choice(4, p=w / w.sum()))]
    sites = g.sites.copy()
    n = len(sites)
    if kind == "jitter_xy":
        k = int(rng.integers(n))
        sites[k, :2] = np.clip(sites[k, :2] + rng.normal(0.0, params.sigma_xy, 2), 0.0, 1.0)
    elif kind == "jitter_v":
        k = int(rng.integers(n))
        sites[k, 2] = np.clip(sites[k, 2] + rng.normal(0.0, params.sigma_v), g.v_min, g.v_max)
    elif kind == "insert":
        if params.max_sites is not None and n >= params.max_sites:
            return g
        new = [rng.random(), rng.random(), rng.uniform(g.v_min, g.v_max)]
        sites = np.vstack([sites, new])
    elif kind == "delete":
        if n <= 1:
            return g
        sites = np.delete(sites, int(rng.integers(n)), axis=0)
    else:
        raise ValueError(f"unknown mutation {kind!r}")
    return g.with_sites(sites)
