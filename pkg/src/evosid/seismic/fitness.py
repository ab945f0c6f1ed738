"""Seismogram misfit and gather-coherence fitness functions.

The image gather here is a cheap stand-in for pre-stack depth migration:
traces sharing a midpoint are moveout-corrected with the RMS velocity of
the candidate model's column below that midpoint, then mapped from
two-way vertical time to depth with the same column.  When the column is
right, reflections line up horizontally across offsets; semblance
measures how well they do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..voronoi import VelocityGrid
from .solver import AcquisitionGeometry, Seismogram


def fitness_ls(sim: Seismogram, obs: Seismogram) -> float:
    """Normalized least-squares misfit between two seismograms.

    ``sum((sim - obs)**2) / max(sum(sim**2), sum(obs**2))``: 0 for identical
    data, 1 for an all-zero simulation, and symmetric in its arguments.
    """
    if not sim.compatible(obs):
        raise ValueError("seismograms differ in geometry, dt or length")
    a, b = sim.data, obs.data
    energy = max(float(np.sum(a * a)), float(np.sum(b * b)))
    if energy == 0.0:
        return 0.0
    return float(np.sum((a - b) ** 2)) / energy


@dataclass(frozen=True)
class Gather:
    """Depth-by-offset panel at one midpoint."""

    panel: np.ndarray  # (depth rows, traces)
    offsets: np.ndarray
    depths: np.ndarray
    midpoint: float

    @property
    def n_traces(self) -> int:
        return self.panel.shape[1]


@dataclass(frozen=True)
class GatherParams:
    """Knobs of the alignment-gather proxy.

    ``bin_halfwidth`` (m) selects the traces of a midpoint; ``None`` means
    one receiver spacing.  ``max_stretch`` mutes samples whose moveout
    stretch ``t/t0 - 1`` exceeds it.  ``window`` is the semblance window in
    depth rows and ``energy_floor`` the fraction of the largest window
    energy below which a window counts as empty.
    """

    bin_halfwidth: float | None = None
    max_stretch: float = 0.5
    window: int = 5
    energy_floor: float = 1e-3
    min_traces: int = 3


def _column_times(column: np.ndarray, h: float, datum: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Depths, two-way vertical times and RMS velocities below ``datum``.

    ``column`` holds interval velocities of cells of thickness ``h``; the
    returned arrays are sampled at the cell centers deeper than the datum.
    """
    n = column.shape[0]
    bounds = np.arange(n + 1) * h
    # cumulative integrals are piecewise linear in depth, so interpolation is exact
    one_way = np.concatenate([[0.0], np.cumsum(h / column)])
    v_dz = np.concatenate([[0.0], np.cumsum(h * column)])
    centers = (np.arange(n) + 0.5) * h
    z = centers[centers > datum]
    t_half = np.interp(z, bounds, one_way) - np.interp(datum, bounds, one_way)
    vrms = np.sqrt((np.interp(z, bounds, v_dz) - np.interp(datum, bounds, v_dz)) / t_half)
    t = 2.0 * t_half
    return z, t, vrms


def midpoint_traces(
    obs: Seismogram, midpoint: float, halfwidth: float
) -> list[tuple[int, int, float]]:
    """``(shot, receiver, offset)`` of traces whose midpoint is within ``halfwidth``."""
    out = []
    for k, xs in enumerate(obs.shots):
        for r, xr in enumerate(obs.receivers):
            if abs(0.5 * (xs + xr) - midpoint) <= halfwidth + 1e-9:
                out.append((k, r, abs(xr - xs)))
    out.sort(key=lambda item: (item[2], item[0], item[1]))
    return out


def default_midpoints(obs: Seismogram, params: GatherParams = GatherParams()) -> list[float]:
    """Midpoints, every two receiver spacings, whose gathers hold enough traces."""
    rec = np.asarray(obs.receivers)
    spacing = float(np.median(np.diff(np.sort(rec)))) if len(rec) > 1 else 1.0
    half = params.bin_halfwidth if params.bin_halfwidth is not None else spacing
    mids = 0.5 * (np.asarray(obs.shots)[:, None] + rec[None, :])
    lo, hi = mids.min(), mids.max()
    cands = np.arange(lo, hi + 1e-9, 2 * spacing)
    return [float(m) for m in cands if len(midpoint_traces(obs, m, half)) >= params.min_traces]


def image_gather(
    model: VelocityGrid,
    obs: Seismogram,
    midpoint: float,
    delay: float = 0.0,
    datum: float | None = None,
    params: GatherParams = GatherParams(),
    shots=None,
) -> Gather:
    """Moveout-corrected, depth-converted gather at ``midpoint``.

    Parameters
    ----------
    model : VelocityGrid
        Candidate velocities; the column under ``midpoint`` is used.
    obs : Seismogram
        Observed data.
    delay : float
        Time (s) of the pulse reference in the records, removed from the
        trace time axis; usually ``Wavelet.recorded_delay``.
    datum : float, optional
        Depth (m) of sources and receivers; defaults to half a cell.
    shots : iterable of int, optional
        Restrict to these shot indices.

    Samples mapped outside the record, or stretched beyond
    ``params.max_stretch``, are zero.
    """
    h = model.dz
    if datum is None:
        datum = 0.5 * h
    rec = np.asarray(obs.receivers)
    spacing = float(np.median(np.diff(np.sort(rec)))) if len(rec) > 1 else model.dx
    half = params.bin_halfwidth if params.bin_halfwidth is not None else spacing
    traces = midpoint_traces(obs, midpoint, half)
    if shots is not None:
        keep = set(shots)
        traces = [t for t in traces if t[0] in keep]
    ix = min(max(int(midpoint / model.dx), 0), model.nx - 1)
    z, t0, vrms = _column_times(model.velocities[:, ix], h, datum)
    panel = np.zeros((z.shape[0], len(traces)))
    offsets = np.array([t[2] for t in traces])
    n = obs.n_samples
    for j, (k, r, off) in enumerate(traces):
        t = np.sqrt(t0 * t0 + (off / vrms) ** 2)
        u = (t + delay) / obs.dt
        ok = u <= n - 1
        if params.max_stretch is not None:
            ok &= t <= (1.0 + params.max_stretch) * t0
        trace = obs.data[k, :, r]
        panel[ok, j] = np.interp(u[ok], np.arange(n), trace)
    return Gather(panel, offsets, z, midpoint)


def semblance(gather, window: int = 5, energy_floor: float = 1e-3) -> float:
    """Mean windowed semblance of a gather, in [0, 1].

    For each window of ``window`` depth rows,
    ``S = sum_z (sum_x a)^2 / (M * sum_z sum_x a^2)`` with ``M`` traces.
    Windows whose energy is at most ``energy_floor`` times the largest
    window energy are skipped; an all-zero gather scores 0.
    """
    a = gather.panel if isinstance(gather, Gather) else np.asarray(gather, dtype=float)
    if a.ndim != 2 or a.shape[1] == 0 or a.shape[0] == 0:
        return 0.0
    m = a.shape[1]
    w = max(1, min(window, a.shape[0]))
    num_rows = a.sum(axis=1) ** 2
    den_rows = (a * a).sum(axis=1)
    kernel = np.ones(w)
    num = np.convolve(num_rows, kernel, mode="valid")
    den = np.convolve(den_rows, kernel, mode="valid") * m
    top = den.max()
    if top <= 0:
        return 0.0
    live = den > energy_floor * top
    s = num[live] / den[live]
    return float(np.clip(s.mean(), 0.0, 1.0))


def semblance_fitness(
    model: VelocityGrid,
    obs: Seismogram,
    midpoints,
    delay: float,
    datum: float | None = None,
    params: GatherParams = GatherParams(),
    shots=None,
) -> float:
    """``1 - mean semblance`` over the midpoints (lower is better)."""
    vals = [
        semblance(image_gather(model, obs, m, delay, datum, params, shots), params.window, params.energy_floor)
        for m in midpoints
    ]
    return 1.0 - (math.fsum(vals) / len(vals) if vals else 0.0)
