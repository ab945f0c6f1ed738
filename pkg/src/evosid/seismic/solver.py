"""2D constant-density acoustic finite-difference modeling.

Second order in time and space on the cell centers of a
:class:`~evosid.voronoi.VelocityGrid`.  The top edge is a pressure-free
surface (antisymmetric image row); left, right and bottom are padded with
sponge layers using Cerjan's exponential taper.
"""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numba
import numpy as np

from ..errors import CflViolation
from ..voronoi import VelocityGrid

CFL_LIMIT = 1.0 / math.sqrt(2.0)
SPONGE_WIDTH = 20
SPONGE_DECAY = 0.015


@dataclass(frozen=True)
class Wavelet:
    """Ricker pulse; ``delay`` defaults to 1.5 periods so the pulse starts near zero."""

    peak_frequency: float = 10.0
    delay: float | None = None
    amplitude: float = 1.0

    def __post_init__(self):
        if self.peak_frequency <= 0:
            raise ValueError("peak frequency must be positive")
        if self.delay is None:
            object.__setattr__(self, "delay", 1.5 / self.peak_frequency)

    def __call__(self, t):
        a = (np.pi * self.peak_frequency * (np.asarray(t) - self.delay)) ** 2
        return self.amplitude * (1.0 - 2.0 * a) * np.exp(-a)

    @property
    def duration(self) -> float:
        """Time after which the pulse is negligible (|w| < 1e-6 * amplitude)."""
        return self.delay + 1.5 / self.peak_frequency

    @property
    def max_frequency(self) -> float:
        """Upper band edge, where the Ricker spectrum falls below ~1% of its peak."""
        return 2.5 * self.peak_frequency

    def points_per_wavelength(self, v_min: float, h: float) -> float:
        """Grid points per shortest wavelength; about 5 or more keeps dispersion small."""
        return v_min / (self.max_frequency * h)

    @property
    def recorded_delay(self) -> float:
        """Reference time of the pulse as recorded by a 2D (line-source) model.

        A 2D Green's function lags its 3D counterpart by 45 degrees of phase,
        one eighth of a period at the peak frequency.
        """
        return self.delay + 0.125 / self.peak_frequency


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Shots and receivers near the surface, positions in meters.

    ``source_depth`` / ``receiver_depth`` default to the first row of
    nodes, half a cell below the free surface of whatever grid is modeled.
    """

    shots: tuple[float, ...]
    receivers: tuple[float, ...]
    dt: float
    length: float
    source_depth: float | None = None
    receiver_depth: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(float(s) for s in self.shots))
        object.__setattr__(self, "receivers", tuple(float(r) for r in self.receivers))
        if not self.shots or not self.receivers:
            raise ValueError("need at least one shot and one receiver")
        if self.dt <= 0 or self.length <= 0:
            raise ValueError("dt and length must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.length / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def depths(self, h: float) -> tuple[float, float]:
        zs = 0.5 * h if self.source_depth is None else self.source_depth
        zr = 0.5 * h if self.receiver_depth is None else self.receiver_depth
        return zs, zr

    def with_shots(self, shots) -> "AcquisitionGeometry":
        return AcquisitionGeometry(
            tuple(shots), self.receivers, self.dt, self.length, self.source_depth, self.receiver_depth
        )

    def check(self, grid: VelocityGrid) -> None:
        width, depth = grid.extent
        for x in self.shots + self.receivers:
            if not 0.0 <= x <= width:
                raise ValueError(f"position {x} m outside grid width {width} m")
        for z in self.depths(grid.dx):
            if not 0.0 <= z <= depth:
                raise ValueError(f"depth {z} m outside grid depth {depth} m")


@dataclass(frozen=True)
class Seismogram:
    """Pressure traces, ``data[shot, sample, receiver]``."""

    data: np.ndarray
    dt: float
    shots: tuple[float, ...]
    receivers: tuple[float, ...]

    def __post_init__(self):
        d = np.asarray(self.data, dtype=float)
        if d.ndim != 3 or d.shape[0] != len(self.shots) or d.shape[2] != len(self.receivers):
            raise ValueError("data must be shaped (shots, samples, receivers)")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "shots", tuple(float(s) for s in self.shots))
        object.__setattr__(self, "receivers", tuple(float(r) for r in self.receivers))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def shot(self, k: int) -> np.ndarray:
        return self.data[k]

    def select_shots(self, indices) -> "Seismogram":
        idx = list(indices)
        return Seismogram(self.data[idx], self.dt, tuple(self.shots[i] for i in idx), self.receivers)

    def compatible(self, other: "Seismogram") -> bool:
        return (
            self.data.shape == other.data.shape
            and self.dt == other.dt
            and self.shots == other.shots
            and self.receivers == other.receivers
        )

    # one CSV per shot: '#' header lines, then rows = samples, columns = receivers
    def shot_to_csv(self, k: int) -> str:
        buf = io.StringIO()
        buf.write(f"# dt={self.dt!r}\n")
        buf.write(f"# shot_x={self.shots[k]!r}\n")
        buf.write("# receiver_x=" + ",".join(repr(r) for r in self.receivers) + "\n")
        np.savetxt(buf, self.data[k], delimiter=",", fmt="%.9e")
        return buf.getvalue()

    def write(self, directory) -> list[str]:
        os.makedirs(directory, exist_ok=True)
        paths = []
        for k in range(len(self.shots)):
            path = os.path.join(directory, f"shot_{k:03d}.csv")
            with open(path, "w") as fh:
                fh.write(self.shot_to_csv(k))
            paths.append(path)
        return paths

    @classmethod
    def read(cls, directory) -> "Seismogram":
        files = sorted(f for f in os.listdir(directory) if f.startswith("shot_") and f.endswith(".csv"))
        if not files:
            raise FileNotFoundError(f"no shot_*.csv files in {directory}")
        data, shots, dt, receivers = [], [], None, None
        for name in files:
            with open(os.path.join(directory, name)) as fh:
                text = fh.read()
            header = {}
            for line in text.splitlines():
                if line.startswith("#"):
                    key, _, val = line[1:].strip().partition("=")
                    header[key.strip()] = val.strip()
            try:
                this_dt = float(header["dt"])
                shots.append(float(header["shot_x"]))
                recs = tuple(float(x) for x in header["receiver_x"].split(","))
            except KeyError as exc:
                raise ValueError(f"{name}: missing header field {exc}") from None
            if dt is None:
                dt, receivers = this_dt, recs
            elif this_dt != dt or recs != receivers:
                raise ValueError(f"{name}: dt or receivers differ from the first shot")
            data.append(np.loadtxt(io.StringIO(text), delimiter=",", comments="#", ndmin=2))
        return cls(np.stack(data), dt, tuple(shots), receivers)


def sponge_profile(width: int = SPONGE_WIDTH, decay: float = SPONGE_DECAY) -> np.ndarray:
    """Damping factors for ``width`` cells; index 0 is the outermost cell."""
    k = np.arange(width)
    return np.exp(-((decay * (width - k)) ** 2))


def _damping(nz: int, nx: int, width: int, decay: float) -> np.ndarray:
    prof = sponge_profile(width, decay)
    dz = np.ones(nz)
    dx = np.ones(nx)
    if width:
        dz[-width:] = prof[::-1]
        dx[:width] = prof
        dx[-width:] = prof[::-1]
    return np.outer(dz, dx)


def _interp_weights(pos: float, h: float, n: int) -> tuple[int, float]:
    """Left node index and weight of the right node for linear interpolation on cell centers."""
    u = pos / h - 0.5
    i = int(math.floor(u))
    i = min(max(i, 0), n - 2)
    w = u - i
    return i, min(max(w, 0.0), 1.0)


@numba.njit(cache=True, nogil=True)
def _kernel(c2, damp, src_amp, src_iz, src_ix, src_wz, src_wx, rec_iz, rec_ix, rec_wz, rec_wx,
            n_steps, energy_every, inv_v2dt2, inv_h2):
    ns = src_amp.shape[0]
    nz, nx = c2.shape
    nr = rec_ix.shape[0]
    out = np.zeros((ns, n_steps, nr))
    n_energy = (n_steps + energy_every - 1) // energy_every if energy_every > 0 else 0
    energy = np.zeros((ns, n_energy))
    for s in range(ns):
        prev = np.zeros((nz, nx))
        cur = np.zeros((nz, nx))
        nxt = np.zeros((nz, nx))
        iz0, ix0, wz, wx = src_iz[s], src_ix[s], src_wz[s], src_wx[s]
        for n in range(n_steps):
            # record p^n
            for r in range(nr):
                jz, jx, az, ax = rec_iz[r], rec_ix[r], rec_wz[r], rec_wx[r]
                out[s, n, r] = ((1 - az) * ((1 - ax) * cur[jz, jx] + ax * cur[jz, jx + 1])
                                + az * ((1 - ax) * cur[jz + 1, jx] + ax * cur[jz + 1, jx + 1]))
            for i in range(nz):
                for j in range(nx):
                    c = cur[i, j]
                    up = cur[i - 1, j] if i > 0 else -c
                    down = cur[i + 1, j] if i < nz - 1 else 0.0
                    left = cur[i, j - 1] if j > 0 else 0.0
                    right = cur[i, j + 1] if j < nx - 1 else 0.0
                    lap = up + down + left + right - 4.0 * c
                    nxt[i, j] = 2.0 * c - prev[i, j] + c2[i, j] * lap
            a = src_amp[s, n]
            if a != 0.0:
                nxt[iz0, ix0] += a * (1 - wz) * (1 - wx) * c2[iz0, ix0]
                nxt[iz0, ix0 + 1] += a * (1 - wz) * wx * c2[iz0, ix0 + 1]
                nxt[iz0 + 1, ix0] += a * wz * (1 - wx) * c2[iz0 + 1, ix0]
                nxt[iz0 + 1, ix0 + 1] += a * wz * wx * c2[iz0 + 1, ix0 + 1]
            for i in range(nz):
                for j in range(nx):
                    d = damp[i, j]
                    nxt[i, j] *= d
                    cur[i, j] *= d
            if energy_every > 0 and n % energy_every == 0:
                # leapfrog-conserved energy between levels n and n+1
                e = 0.0
                for i in range(nz):
                    for j in range(nx):
                        dtp = nxt[i, j] - cur[i, j]
                        e += dtp * dtp * inv_v2dt2[i, j]
                        if j < nx - 1:
                            e += (nxt[i, j + 1] - nxt[i, j]) * (cur[i, j + 1] - cur[i, j]) * inv_h2
                        else:
                            e += nxt[i, j] * cur[i, j] * inv_h2
                        if j == 0:
                            e += nxt[i, j] * cur[i, j] * inv_h2
                        if i < nz - 1:
                            e += (nxt[i + 1, j] - nxt[i, j]) * (cur[i + 1, j] - cur[i, j]) * inv_h2
                        else:
                            e += nxt[i, j] * cur[i, j] * inv_h2
                        if i == 0:
                            e += 2.0 * nxt[i, j] * cur[i, j] * inv_h2
                energy[s, n // energy_every] = e
            prev, cur, nxt = cur, nxt, prev
    return out, energy


@dataclass
class Simulation:
    seismogram: Seismogram
    energy: np.ndarray | None = None  # (shots, samples) every ``energy_every`` steps
    energy_every: int = 0


def check_cfl(v_max: float, dt: float, h: float) -> float:
    """Courant number ``v_max*dt/h``; raises :class:`CflViolation` above 1/sqrt(2)."""
    courant = v_max * dt / h
    if courant > CFL_LIMIT * (1 + 1e-12):
        raise CflViolation(
            f"unstable: v_max*dt/h = {courant:.4f} exceeds {CFL_LIMIT:.4f} "
            f"(v_max={v_max}, dt={dt}, h={h})"
        )
    return courant


def simulate(
    grid: VelocityGrid,
    geom: AcquisitionGeometry,
    wavelet: Wavelet,
    sponge_width: int = SPONGE_WIDTH,
    sponge_decay: float = SPONGE_DECAY,
    energy_every: int = 0,
) -> Simulation:
    """Model every shot of ``geom`` in ``grid``; optionally sample the field energy."""
    h = grid.dx
    if not math.isclose(grid.dx, grid.dz, rel_tol=1e-9):
        raise ValueError(f"cells must be square, got dx={grid.dx} dz={grid.dz}")
    check_cfl(float(grid.velocities.max()), geom.dt, h)
    geom.check(grid)
    w = sponge_width
    v = np.pad(grid.velocities, ((0, w), (w, w)), mode="edge")
    nz, nx = v.shape
    c2 = (v * geom.dt / h) ** 2
    damp = _damping(nz, nx, w, sponge_decay)
    zs, zr = geom.depths(h)

    n_steps = geom.n_steps
    ns = len(geom.shots)
    # the kernel scales the pulse by (v*dt/h)^2: a point source of strength 1/h^2
    src_amp = np.tile(wavelet(np.arange(n_steps) * geom.dt), (ns, 1))
    src_iz = np.empty(ns, np.int64)
    src_ix = np.empty(ns, np.int64)
    src_wz = np.empty(ns)
    src_wx = np.empty(ns)
    for k, xs in enumerate(geom.shots):
        src_iz[k], src_wz[k] = _interp_weights(zs, h, nz)
        ix, src_wx[k] = _interp_weights(xs, h, grid.nx)
        src_ix[k] = ix + w
    nr = len(geom.receivers)
    rec_iz = np.empty(nr, np.int64)
    rec_ix = np.empty(nr, np.int64)
    rec_wz = np.empty(nr)
    rec_wx = np.empty(nr)
    for r, xr in enumerate(geom.receivers):
        rec_iz[r], rec_wz[r] = _interp_weights(zr, h, nz)
        ix, rec_wx[r] = _interp_weights(xr, h, grid.nx)
        rec_ix[r] = ix + w
    inv_v2dt2 = 1.0 / (v * geom.dt) ** 2
    data, energy = _kernel(
        c2, damp, src_amp, src_iz, src_ix, src_wz, src_wx,
        rec_iz, rec_ix, rec_wz, rec_wx, n_steps, int(energy_every), inv_v2dt2, 1.0 / (h * h),
    )
    seis = Seismogram(data, geom.dt, geom.shots, geom.receivers)
    return Simulation(seis, energy if energy_every else None, int(energy_every))


def forward_model(grid: VelocityGrid, geom: AcquisitionGeometry, wavelet: Wavelet, **kwargs) -> Seismogram:
    """Synthetic pressure seismogram of every shot.

    Raises
    ------
    CflViolation
        If ``max(v) * dt / h`` exceeds ``1/sqrt(2)``.
    """
    return simulate(grid, geom, wavelet, **kwargs).seismogram


def first_arrival(trace: np.ndarray, dt: float, threshold: float = 0.05) -> float:
    """Time of the first sample whose magnitude reaches ``threshold * max|trace|``."""
    a = np.abs(np.asarray(trace))
    peak = a.max()
    if peak == 0:
        return math.nan
    k = int(np.argmax(a >= threshold * peak))
    if k == 0:
        return 0.0
    # linear interpolation of the threshold crossing
    lo, hi = a[k - 1], a[k]
    frac = (threshold * peak - lo) / (hi - lo) if hi > lo else 0.0
    return (k - 1 + frac) * dt
