import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosid.seismic.fitness import (
    Gather,
    GatherParams,
    default_midpoints,
    fitness_ls,
    image_gather,
    midpoint_traces,
    semblance,
    semblance_fitness,
)
from evosid.seismic.solver import Seismogram, Wavelet
from evosid.voronoi import VelocityGrid

V = 2000.0
REFLECTOR = 400.0  # m
MID = 500.0
DT = 0.002
DELAY = 0.1


def hyperbola_data(offsets=np.arange(0.0, 560.0, 80.0), n_samples=400, v=V, z=REFLECTOR):
    """Common-midpoint traces of one flat reflector in a constant-velocity medium."""
    shots = tuple(MID - o / 2 for o in offsets)
    recs = tuple(MID + o / 2 for o in offsets)
    w = Wavelet(15.0, delay=0.0)
    t = np.arange(n_samples) * DT
    data = np.zeros((len(shots), n_samples, len(recs)))
    for k, xs in enumerate(shots):
        for r, xr in enumerate(recs):
            travel = np.hypot(2 * z, xr - xs) / v
            data[k, :, r] = w(t - travel - DELAY)
    return Seismogram(data, DT, shots, recs)


def constant_model(v, n=200, width=1000.0):
    return VelocityGrid(np.full((n, n), v), (width, width))


PARAMS = GatherParams(bin_halfwidth=1.0, max_stretch=None)


def peak_depths(g: Gather):
    # the positive main lobe of the pulse, not a side lobe
    return g.depths[np.argmax(g.panel, axis=0)]


def test_ls_examples():
    rng = np.random.default_rng(0)
    obs = Seismogram(rng.normal(size=(2, 20, 3)), 0.01, (0.0, 1.0), (0.0, 1.0, 2.0))
    assert fitness_ls(obs, obs) == 0.0
    zero = Seismogram(np.zeros_like(obs.data), obs.dt, obs.shots, obs.receivers)
    assert fitness_ls(zero, obs) == 1.0
    assert fitness_ls(zero, zero) == 0.0
    other = Seismogram(rng.normal(size=(2, 20, 3)), 0.01, obs.shots, obs.receivers)
    assert fitness_ls(obs, other) == fitness_ls(other, obs) > 0
    with pytest.raises(ValueError):
        fitness_ls(obs, obs.select_shots([0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_ls_symmetric_and_scale_free(seed, c):
    rng = np.random.default_rng(seed)
    a = Seismogram(rng.normal(size=(1, 10, 2)), 0.01, (0.0,), (0.0, 1.0))
    b = Seismogram(rng.normal(size=(1, 10, 2)), 0.01, (0.0,), (0.0, 1.0))
    assert fitness_ls(a, b) == pytest.approx(fitness_ls(b, a), rel=1e-12)
    ca = Seismogram(c * a.data, a.dt, a.shots, a.receivers)
    cb = Seismogram(c * b.data, b.dt, b.shots, b.receivers)
    assert fitness_ls(ca, cb) == pytest.approx(fitness_ls(a, b), rel=1e-9)
    assert fitness_ls(a, b) >= 0


def test_gather_flat_with_true_velocity():
    obs = hyperbola_data()
    g = image_gather(constant_model(V), obs, MID, DELAY, datum=0.0, params=PARAMS)
    assert g.n_traces == 7
    depths = peak_depths(g)
    assert np.all(np.abs(depths - REFLECTOR) <= 10.0)
    assert np.ptp(depths) <= 5.0  # one depth cell
    assert semblance(g) > 0.9


def test_gather_curves_up_with_slow_velocity():
    obs = hyperbola_data()
    good = image_gather(constant_model(V), obs, MID, DELAY, datum=0.0, params=PARAMS)
    slow = image_gather(constant_model(0.7 * V), obs, MID, DELAY, datum=0.0, params=PARAMS)
    depths = peak_depths(slow)
    # over-correction: the event rises toward the far offsets
    assert np.all(np.diff(depths) <= 0) and depths[-1] < depths[0] - 40.0
    assert depths[0] == pytest.approx(0.7 * REFLECTOR, abs=10.0)
    assert semblance(slow) < semblance(good) - 0.2


def test_zero_data_gives_zero_gather():
    obs = hyperbola_data()
    zero = Seismogram(np.zeros_like(obs.data), obs.dt, obs.shots, obs.receivers)
    g = image_gather(constant_model(V), zero, MID, DELAY, params=PARAMS)
    assert not np.any(g.panel)
    assert semblance(g) == 0.0


def test_midpoint_selection():
    obs = hyperbola_data(offsets=np.array([0.0, 100.0, 200.0]))
    tr = midpoint_traces(obs, MID, 1.0)
    assert [(k, r) for k, r, _ in tr] == [(0, 0), (1, 1), (2, 2)]
    assert [o for _, _, o in tr] == [0.0, 100.0, 200.0]
    mids = default_midpoints(obs, GatherParams(min_traces=1))
    assert mids and all(min(obs.shots) <= m <= max(obs.receivers) for m in mids)


def test_stretch_mute_zeroes_shallow_far_offsets():
    obs = hyperbola_data()
    g = image_gather(constant_model(V), obs, MID, DELAY, datum=0.0, params=GatherParams(bin_halfwidth=1.0))
    shallow = g.depths < 100.0
    assert not np.any(g.panel[shallow, -1])
    assert np.any(g.panel[shallow, 0])


def test_semblance_examples():
    tr = np.sin(np.linspace(0, 6, 40))
    assert semblance(np.tile(tr[:, None], (1, 6))) == pytest.approx(1.0)
    one = np.zeros((40, 8))
    one[:, 3] = tr
    assert semblance(one) == pytest.approx(1 / 8)
    assert semblance(np.zeros((10, 4))) == 0.0
    assert semblance(np.zeros((0, 4))) == 0.0


def test_semblance_random_traces_near_one_over_m():
    rng = np.random.default_rng(0)
    vals = [semblance(rng.normal(size=(100, 8))) for _ in range(100)]
    assert all(abs(v - 1 / 8) <= 0.05 for v in vals)
    assert abs(np.mean(vals) - 1 / 8) <= 0.01


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3),
       st.integers(1, 9), st.integers(1, 30))
def test_semblance_bounds_and_scale_invariance(seed, c, m, rows):
    a = np.random.default_rng(seed).normal(size=(rows, m))
    s = semblance(a)
    assert 0.0 <= s <= 1.0
    assert semblance(c * a) == pytest.approx(s, rel=1e-9, abs=1e-12)


def test_semblance_fitness_prefers_true_velocity():
    obs = hyperbola_data()
    mids = [MID]
    f = {s: semblance_fitness(constant_model(s * V), obs, mids, DELAY, 0.0, PARAMS) for s in (0.8, 1.0, 1.2)}
    assert min(f, key=f.get) == 1.0
    assert semblance_fitness(constant_model(V), obs, [], DELAY) == 1.0
