import csv
import io
import math

import numpy as np
import pytest

from evosid.derivation import Expression, decode, expression_unit
from evosid.engine import EngineConfig, run
from evosid.grammar import NEWTON, default_indentation_variables, generate_dimensional_grammar
from evosid.symreg import Dataset, fitness_mse, make_g3p_problem, make_indentation_benchmark, planted_law
from evosid.units import Unit

UNITS = {v.name: v.unit for v in default_indentation_variables()}


def test_noiseless_targets_match_planted_law():
    data, law = make_indentation_benchmark(n_rows=40, seed=3, c1=1.3, c2=0.7)
    b = data.bindings()
    direct = 1.3 * b["E"] * b["d"] ** 2 + 0.7 * b["eta"] * b["d"] * b["v"]
    np.testing.assert_allclose(data.target, direct, rtol=1e-14)
    assert fitness_mse(Expression.parse(law), data) < 1e-25


def test_planted_law_unit():
    assert expression_unit(Expression.parse(planted_law(1.0, 1.0)), UNITS) == NEWTON
    assert expression_unit(Expression.parse("(E*(d*d))"), UNITS) == Unit(1, 1, -2)
    assert expression_unit(Expression.parse("((eta*d)*v)"), UNITS) == Unit(1, 1, -2)


def test_zero_coefficients():
    data, _ = make_indentation_benchmark(c1=0.0, c2=0.0)
    assert np.all(data.target == 0)
    assert fitness_mse(Expression.parse("(0.0*d)"), data) == 0.0


def test_single_term_identity():
    data, _ = make_indentation_benchmark(seed=8, c1=1.0, c2=0.0)
    assert fitness_mse(Expression.parse("E*d*d"), data) == pytest.approx(0.0, abs=1e-24)


def test_mse_nonnegative_and_failure_is_inf():
    data, _ = make_indentation_benchmark(seed=1)
    assert fitness_mse(Expression.parse("(d*v)"), data) > 0
    assert fitness_mse(Expression.parse("(E/(d-d))"), data) == math.inf


def test_inputs_log_uniform_within_ranges():
    data, _ = make_indentation_benchmark(n_rows=4000, seed=0, ranges={"E": (1.0, 100.0)})
    e = data.bindings()["E"]
    assert e.min() >= 1.0 and e.max() <= 100.0
    # log-uniform: half the mass below the geometric mean
    assert abs(np.mean(e < 10.0) - 0.5) < 0.03
    with pytest.raises(ValueError):
        make_indentation_benchmark(ranges={"d": (0.0, 1.0)})


def test_noise_and_determinism():
    a, _ = make_indentation_benchmark(seed=4, noise_sigma=0.1)
    b, _ = make_indentation_benchmark(seed=4, noise_sigma=0.1)
    clean, _ = make_indentation_benchmark(seed=4)
    np.testing.assert_array_equal(a.target, b.target)
    np.testing.assert_array_equal(a.inputs, clean.inputs)
    resid = a.target - clean.target
    assert 0.03 < resid.std() < 0.2


def test_dataset_csv_roundtrip():
    data, _ = make_indentation_benchmark(n_rows=5, seed=2)
    text = data.to_csv()
    header = next(csv.reader(io.StringIO(text)))
    assert header == ["d:(0,1,0)", "v:(0,1,-1)", "E:(1,-1,-2)", "eta:(1,-1,-1)", "F:(1,1,-2)"]
    back = Dataset.from_csv(text)
    np.testing.assert_array_equal(back.inputs, data.inputs)
    np.testing.assert_array_equal(back.target, data.target)
    assert back.variables == data.variables and back.target_unit == NEWTON


def test_dataset_validation():
    v = tuple(default_indentation_variables())
    with pytest.raises(ValueError):
        Dataset(v, np.ones((1, 4)), np.ones(1), NEWTON)
    with pytest.raises(ValueError):
        Dataset(v, np.ones((3, 3)), np.ones(3), NEWTON)
    with pytest.raises(ValueError):
        Dataset.from_csv("d,F\n1,2\n3,4\n")


def test_problem_initial_population_ramped():
    g = generate_dimensional_grammar(default_indentation_variables(), NEWTON)
    data, _ = make_indentation_benchmark()
    p = make_g3p_problem(g, data, max_depth=8)
    rng = np.random.default_rng(0)
    depths = {p.init(rng, i).depth for i in range(40)}
    assert max(depths) <= 8 and min(depths) <= 5


def test_short_run_improves():
    g = generate_dimensional_grammar(default_indentation_variables(), NEWTON)
    data, _ = make_indentation_benchmark(seed=0)
    res = run(EngineConfig(population_size=60, generations=8, seed=1), make_g3p_problem(g, data))
    assert res.log.records[-1].best <= res.log.records[0].best
    assert expression_unit(decode(res.best), UNITS) == NEWTON
