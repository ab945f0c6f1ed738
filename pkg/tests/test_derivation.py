import ast
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_grammar
from evosid.derivation import (
    Expression,
    check_tree,
    crossover,
    decode,
    evaluate,
    expression_unit,
    init_tree,
    init_tree_naive,
    mutate,
    regrow_at,
    tree_from_text,
    tree_to_text,
)
from evosid.errors import BudgetTooSmall, NonFiniteError
from evosid.symreg import planted_law
from evosid.units import Unit

UNITS = {"d": (0, 1, 0), "v": (0, 1, -1), "E": (1, -1, -2), "eta": (1, -1, -1)}
NEWTON = (1, 1, -2)
UNITS_U = {k: Unit(*v) for k, v in UNITS.items()}


def ast_unit(text: str):
    """Independent unit check of an infix expression via Python's own parser."""

    def rec(node):
        if isinstance(node, ast.Name):
            return UNITS[node.id]
        if isinstance(node, ast.Constant):
            return (0, 0, 0)
        if isinstance(node, ast.UnaryOp):
            return rec(node.operand)
        a, b = rec(node.left), rec(node.right)
        if a is None or b is None:
            return None
        if isinstance(node.op, (ast.Add, ast.Sub)):
            return a if a == b else None
        sign = 1 if isinstance(node.op, ast.Mult) else -1
        return tuple(x + sign * y for x, y in zip(a, b))

    return rec(ast.parse(text, mode="eval").body)


def enumerate_trees_check(g, limit: int) -> bool:
    """count_trees equals brute-force enumeration at every depth with at most ``limit`` trees."""
    from test_grammar import enumerate_trees

    from evosid.grammar import count_trees

    d = 0
    while True:
        n = count_trees(g, d)
        if n > limit:
            return d > 1
        trees = enumerate_trees(g, g.start, d)
        if n != len(trees) or len(set(trees)) != n:
            return False
        d += 1


def sample(g, n, depth, seed=0):
    rng = np.random.default_rng(seed)
    return [init_tree(g, g.depth_index, depth, rng) for _ in range(n)]


def test_init_single_leaf():
    g = toy_grammar({"A": [["x"]]})
    for b in (1, 2, 7):
        t = init_tree(g, g.depth_index, b, np.random.default_rng(b))
        assert tree_to_text(t) == "(A x)" and t.depth == 1


def test_init_budget_one_forbids_recursion():
    g = toy_grammar({"A": [["x"], ["(", "A", "+", "A", ")"]]})
    rng = np.random.default_rng(0)
    assert all(init_tree(g, g.depth_index, 1, rng).size == 2 for _ in range(200))


def test_init_budget_too_small(dim_grammar):
    with pytest.raises(BudgetTooSmall):
        init_tree(dim_grammar, dim_grammar.depth_index, 3, np.random.default_rng(0))


def test_init_uniform_over_admissible():
    g = toy_grammar({"A": [["x"], ["y"], ["(", "A", "+", "A", ")"]]})
    rng = np.random.default_rng(1)
    roots = Counter(init_tree(g, g.depth_index, 2, rng).production.rhs[0].name for _ in range(6000))
    for k in ("x", "y", "("):
        assert abs(roots[k] / 6000 - 1 / 3) < 0.03


def test_init_deterministic(dim_grammar):
    a = sample(dim_grammar, 20, 8, seed=3)
    b = sample(dim_grammar, 20, 8, seed=3)
    assert [tree_to_text(t) for t in a] == [tree_to_text(t) for t in b]


@pytest.mark.slow
def test_init_1e5_budget_10(dim_grammar):
    rng = np.random.default_rng(2024)
    di = dim_grammar.depth_index
    deepest = 0
    for _ in range(100_000):
        t = init_tree(dim_grammar, di, 10, rng)
        deepest = max(deepest, t.depth)
    assert deepest <= 10


def test_naive_single_leaf():
    g = toy_grammar({"A": [["x"]]})
    t, attempts = init_tree_naive(g, 3, 5, np.random.default_rng(0))
    assert t is not None and attempts == 1


def test_naive_fails_where_constrained_never_does(dim_grammar):
    rng = np.random.default_rng(7)
    fails = sum(init_tree_naive(dim_grammar, 10, 1, rng)[0] is None for _ in range(10_000))
    assert fails > 0
    di = dim_grammar.depth_index
    for _ in range(10_000):
        assert init_tree(dim_grammar, di, 10, rng).depth <= 10


def test_crossover_identical_leaves():
    g = toy_grammar({"A": [["x"]]})
    t = init_tree(g, g.depth_index, 1, np.random.default_rng(0))
    c1, c2 = crossover(t, t, g, g.depth_index, 1, np.random.default_rng(0))
    assert c1 == t and c2 == t


def test_crossover_no_shared_symbol_returns_parents():
    g = toy_grammar({"S": [["A"], ["B"]], "A": [["a"]], "B": [["b"]]}, start="S")
    a = tree_from_text("(S (A a))", g)
    b = tree_from_text("(S (B b))", g)
    rng = np.random.default_rng(0)
    seen = set()
    for _ in range(50):
        c1, c2 = crossover(a, b, g, g.depth_index, 3, rng)
        seen.add((tree_to_text(c1), tree_to_text(c2)))
    # swapping at S is allowed and exchanges whole trees; at A there is no partner
    assert seen <= {("(S (A a))", "(S (B b))"), ("(S (B b))", "(S (A a))")}


def test_crossover_does_not_modify_parents(dim_grammar):
    a, b = sample(dim_grammar, 2, 8, seed=5)
    ta, tb = tree_to_text(a), tree_to_text(b)
    crossover(a, b, dim_grammar, dim_grammar.depth_index, 8, np.random.default_rng(1))
    assert (tree_to_text(a), tree_to_text(b)) == (ta, tb)


def test_variation_sweep_validity_and_units(dim_grammar):
    """10^4 crossovers and 10^4 mutations: valid, within depth, unit (1,1,-2)."""
    g, di, depth = dim_grammar, dim_grammar.depth_index, 8
    rng = np.random.default_rng(11)
    pool = sample(g, 200, depth, seed=12)
    checked = 0
    for i in range(10_000):
        a, b = pool[rng.integers(len(pool))], pool[rng.integers(len(pool))]
        c1, c2 = crossover(a, b, g, di, depth, rng)
        m = mutate(c1, g, di, depth, rng)
        for t in (c1, c2, m):
            assert not check_tree(t, g, depth)
        pool[i % len(pool)] = m
        if i % 5 == 0:
            assert ast_unit(decode(m).text) == NEWTON
            checked += 1
    assert checked >= 2000


def test_sampled_trees_decode_to_newton(dim_grammar):
    for t in sample(dim_grammar, 10_000, 7, seed=9):
        text = decode(t).text
        assert ast_unit(text) == NEWTON


def test_mutation_at_root_is_init(dim_grammar):
    g, di = dim_grammar, dim_grammar.depth_index
    t = sample(g, 1, 6)[0]
    for seed in range(20):
        fresh = init_tree(g, di, 8, np.random.default_rng(seed))
        regrown = regrow_at(t, (), g, di, 8, np.random.default_rng(seed))
        assert regrown == fresh


def test_mutation_single_leaf_grammar():
    g = toy_grammar({"A": [["x"]]})
    t = init_tree(g, g.depth_index, 1, np.random.default_rng(0))
    assert mutate(t, g, g.depth_index, 1, np.random.default_rng(0)) == t


def test_constant_leaf_gets_gaussian_step():
    g = toy_grammar({"A": [["const"]]})
    t = tree_from_text("(A 1.5)", g)
    rng = np.random.default_rng(4)
    vals = np.array([next(regrow_at(t, (0,), g, g.depth_index, 1, rng).leaves()).value for _ in range(4000)])
    assert abs(vals.mean() - 1.5) < 0.05
    assert abs(vals.std() - 1.0) < 0.05


def test_mutation_site_uniform_over_nonterminals_and_constants():
    # sites: the A node (regrow, uniform on [-10, 10]) and the constant (step of 1e-6)
    g = toy_grammar({"A": [["const"]]})
    t = tree_from_text("(A 1.5)", g)
    rng = np.random.default_rng(5)
    vals = np.array(
        [next(mutate(t, g, g.depth_index, 1, rng, const_sigma=1e-6).leaves()).value for _ in range(4000)]
    )
    nudged = np.mean(np.abs(vals - 1.5) < 1e-4)
    assert abs(nudged - 0.5) < 0.03


def _tree(g, text):
    return tree_from_text(text, g)


def test_decode_examples(dim_grammar):
    g = dim_grammar
    n_d = _tree(g, "(N_{0,1,0} d)")
    e = decode(n_d)
    assert e.text == "d"
    assert expression_unit(e, UNITS_U) == (0, 1, 0)
    t = _tree(
        g,
        '(S (N_{1,1,-2} "(" (N_{1,-1,-2} E) "*" (N_{0,2,0} "(" (N_{0,1,0} d) "*" (N_{0,1,0} d) ")") ")"))',
    )
    e = decode(t)
    assert e.text == "(E*(d*d))"
    assert expression_unit(e, UNITS_U) == NEWTON == ast_unit(e.text)


def test_text_roundtrip(dim_grammar):
    for t in sample(dim_grammar, 200, 8, seed=21):
        assert tree_from_text(tree_to_text(t), dim_grammar) == t


def test_evaluate_examples():
    assert evaluate(Expression.parse("(E*(d*d))"), {"E": 2.0, "d": 3.0}) == 18.0
    with pytest.raises(NonFiniteError):
        evaluate(Expression.parse("(d/(d-d))"), {"d": 1.0})
    with pytest.raises(KeyError):
        evaluate(Expression.parse("(d*v)"), {"d": 1.0})


def test_evaluate_planted_law_vs_python():
    rng = np.random.default_rng(0)
    c1, c2 = 1.7, -0.3
    e = Expression.parse(planted_law(c1, c2))
    for _ in range(200):
        d, v, E, eta = np.exp(rng.uniform(-1, 2, 4))
        got = evaluate(e, {"d": d, "v": v, "E": E, "eta": eta})
        ref = c1 * E * d**2 + c2 * eta * d * v
        assert abs(got - ref) <= 1e-12 * abs(ref)


def test_evaluate_vectorized():
    x = np.array([1.0, 2.0, 4.0])
    out = evaluate(Expression.parse("((x*x)-1.0)"), {"x": x})
    np.testing.assert_array_equal(out, x * x - 1)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_evaluate_matches_python_arithmetic(a, b):
    text = "((a+b)*(a-b))"
    assert evaluate(Expression.parse(text), {"a": a, "b": b}) == eval(text, {}, {"a": a, "b": b})


def test_expression_unit_rejects_mismatch():
    assert expression_unit(Expression.parse("(d+v)"), UNITS_U) is None
    assert expression_unit(Expression.parse("(d-d)"), UNITS_U) == (0, 1, 0)



def test_decode_structural_equals_parse():
    from evosid.derivation import parse_tokens
    from evosid.grammar import OperatorSet, default_indentation_variables, generate_dimensional_grammar

    g = generate_dimensional_grammar(
        default_indentation_variables(), NEWTON, ops=OperatorSet(unary=("exp", "tanh"))
    )
    for t in sample(g, 500, 8, seed=31):
        tokens = [float(x.value) if x.symbol.constant else x.symbol.name for x in t.leaves()]
        assert decode(t).ast == parse_tokens(tokens)


def test_decode_unparenthesized_grammar_falls_back():
    g = toy_grammar({"A": [["x"], ["y"], ["A", "+", "A"]]})
    t = tree_from_text("(A (A x) + (A (A y) + (A x)))", g)
    e = decode(t)
    assert e.text == "x+y+x"
    assert e.ast == ("+", ("+", ("var", "x"), ("var", "y")), ("var", "x"))
