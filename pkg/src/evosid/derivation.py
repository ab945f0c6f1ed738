"""Derivation trees: initialization, typed variation, decoding and evaluation.

Nodes are immutable once built.  Variation operators rebuild the path from
the root to the modified node and reuse every untouched subtree, so parents
are never altered by producing offspring.

Depth convention: terminal leaves have depth 0 and a nonterminal node has
depth ``1 + max(child depths)``.  ``A -> "x"`` is therefore a depth-1 tree,
matching the grammar's depth index, and a budget ``b`` admits a production
``p`` at a node iff ``depth_index.production_depth(p) <= b``.
"""

from __future__ import annotations

import bisect
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import BudgetTooSmall, MalformedGrammar, NonFiniteError
from .grammar import (
    BINARY_OPS,
    UNARY_OPS,
    DepthIndex,
    Grammar,
    Production,
    Symbol,
)
from .units import Unit

CONST_RANGE = (-10.0, 10.0)


class Node:
    """One derivation-tree node.

    Terminal nodes have ``production=None`` and no children; constant leaves
    keep their sampled value in ``value``.
    """

    __slots__ = ("symbol", "production", "children", "value", "depth", "size")

    def __init__(
        self,
        symbol: Symbol,
        production: Production | None = None,
        children: tuple["Node", ...] = (),
        value: float | None = None,
    ):
        self.symbol = symbol
        self.production = production
        self.children = children
        self.value = value
        if children:
            depth, size = 0, 1
            for c in children:
                if c.depth > depth:
                    depth = c.depth
                size += c.size
            self.depth = depth + 1
            self.size = size
        else:
            self.depth = 0 if symbol.terminal else 1
            self.size = 1

    @property
    def is_terminal(self) -> bool:
        return self.symbol.terminal

    def __eq__(self, other) -> bool:
        if not isinstance(other, Node):
            return NotImplemented
        return (
            self.symbol == other.symbol
            and self.production == other.production
            and self.value == other.value
            and self.children == other.children
        )

    def __hash__(self):
        return hash((self.symbol, self.value, self.size, self.depth))

    def __repr__(self) -> str:
        return f"Node({tree_to_text(self)})"

    def leaves(self) -> Iterator["Node"]:
        stack = [self]
        while stack:
            n = stack.pop()
            if n.children:
                stack.extend(reversed(n.children))
            else:
                yield n

    def walk(self, level: int = 0, path: tuple[int, ...] = ()):
        """Yield ``(node, level, path)`` in pre-order."""
        stack = [(self, level, path)]
        while stack:
            n, lv, p = stack.pop()
            yield n, lv, p
            for i in range(len(n.children) - 1, -1, -1):
                stack.append((n.children[i], lv + 1, p + (i,)))


DerivationTree = Node


def replace_subtree(root: Node, path: Sequence[int], new: Node) -> Node:
    """Copy of ``root`` with the node at ``path`` replaced by ``new``."""
    if not path:
        return new
    i = path[0]
    children = list(root.children)
    children[i] = replace_subtree(children[i], path[1:], new)
    return Node(root.symbol, root.production, tuple(children), root.value)


def subtree_at(root: Node, path: Sequence[int]) -> Node:
    n = root
    for i in path:
        n = n.children[i]
    return n


# -- initialization ----------------------------------------------------------


class _Tables:
    """Per-nonterminal productions sorted by the budget they need.

    ``entries[nt]`` is a list ``[nt, needs, options]``; each option pairs a
    production with its rhs, where plain terminals are already shared
    leaves (leaves are immutable) and nonterminals are their own entries,
    so sampling never hashes a symbol.
    """

    def __init__(self, g: Grammar, di: DepthIndex):
        leaves = {t: Node(t) for t in g.terminals if not t.constant}
        self.entries: dict[Symbol, list] = {nt: [nt, [], []] for nt in g.rules}
        for nt, prods in g.rules.items():
            order = sorted(range(len(prods)), key=lambda k: di.production_depth(prods[k]))
            entry = self.entries[nt]
            entry[1] = [di.production_depth(prods[k]) for k in order]
            entry[2] = [
                (prods[k], tuple(leaves.get(s) or self.entries.get(s, s) for s in prods[k].rhs))
                for k in order
            ]


_TABLES_ATTR = "_evosid_tables"


def _tables(g: Grammar, di: DepthIndex) -> _Tables:
    cache = di.__dict__.setdefault(_TABLES_ATTR, {})
    t = cache.get(id(g))
    if t is None:
        t = cache[id(g)] = _Tables(g, di)
    return t


def _leaf(sym: Symbol, rng: np.random.Generator, const_range) -> Node:
    if sym.constant:
        lo, hi = const_range
        return Node(sym, value=lo + (hi - lo) * rng.random())
    return Node(sym)


def grow(
    sym: Symbol,
    g: Grammar,
    di: DepthIndex,
    budget: int,
    rng: np.random.Generator,
    const_range=CONST_RANGE,
) -> Node:
    """Random complete tree rooted at ``sym`` with depth at most ``budget``.

    Each nonterminal picks uniformly among the productions whose depth
    index fits the remaining budget.
    """
    if sym.terminal:
        return _leaf(sym, rng, const_range)
    if di[sym] > budget:
        raise BudgetTooSmall(
            f"symbol {sym.name!r} needs depth {di[sym]}, budget is {budget}"
        )
    entries = _tables(g, di).entries
    random = rng.random
    bisect_right = bisect.bisect_right
    lo, hi = const_range
    span = hi - lo

    def rec(entry: list, b: int) -> Node:
        s, needs, options = entry
        p, shape = options[int(random() * bisect_right(needs, b))]
        children = []
        for c in shape:
            kind = type(c)
            if kind is Node:
                children.append(c)
            elif kind is list:
                children.append(rec(c, b - 1))
            else:
                children.append(Node(c, value=lo + span * random()))
        return Node(s, p, tuple(children))

    return rec(entries[sym], budget)


def init_tree(
    g: Grammar,
    di: DepthIndex,
    max_depth: int,
    rng: np.random.Generator,
    const_range=CONST_RANGE,
) -> Node:
    """Depth-constrained random tree from the start symbol; never rejects.

    Raises
    ------
    BudgetTooSmall
        If ``max_depth`` is below the depth index of the start symbol.
    """
    return grow(g.start, g, di, max_depth, rng, const_range)


def init_tree_naive(
    g: Grammar,
    max_depth: int,
    max_attempts: int,
    rng: np.random.Generator,
    const_range=CONST_RANGE,
) -> tuple[Node | None, int]:
    """Uniform production choice with no depth filter, retried on overflow.

    Returns ``(tree, attempts)``; ``tree`` is None when all ``max_attempts``
    attempts overflowed ``max_depth``.
    """

    class _Overflow(Exception):
        pass

    def rec(s: Symbol, b: int) -> Node:
        if s.terminal:
            return _leaf(s, rng, const_range)
        if b <= 0:
            raise _Overflow
        prods = g.rules[s]
        if not prods:
            raise _Overflow
        p = prods[int(rng.integers(len(prods)))]
        return Node(s, p, tuple(rec(c, b - 1) for c in p.rhs))

    for attempt in range(1, max_attempts + 1):
        try:
            return rec(g.start, max_depth), attempt
        except _Overflow:
            continue
    return None, max_attempts


# -- variation ---------------------------------------------------------------


def crossover(
    a: Node,
    b: Node,
    g: Grammar,
    di: DepthIndex,
    max_depth: int,
    rng: np.random.Generator,
) -> tuple[Node, Node]:
    """Swap two subtrees rooted at the same nonterminal symbol.

    The crossing point in ``a`` is uniform over its nonterminal nodes, the
    one in ``b`` uniform over nodes with the same symbol.  If ``b`` has none,
    or an offspring would exceed ``max_depth``, that offspring is a copy of
    its parent.
    """
    sites_a = [(n, lv, p) for n, lv, p in a.walk() if not n.is_terminal]
    na, la, pa = sites_a[int(rng.integers(len(sites_a)))]
    sites_b = [(n, lv, p) for n, lv, p in b.walk() if n.symbol == na.symbol]
    if not sites_b:
        return a, b
    nb, lb, pb = sites_b[int(rng.integers(len(sites_b)))]
    c1 = replace_subtree(a, pa, nb) if la + nb.depth <= max_depth else a
    c2 = replace_subtree(b, pb, na) if lb + na.depth <= max_depth else b
    return c1, c2


def mutate(
    t: Node,
    g: Grammar,
    di: DepthIndex,
    max_depth: int,
    rng: np.random.Generator,
    const_sigma: float = 1.0,
    const_range=CONST_RANGE,
) -> Node:
    """Regrow a random subtree, or nudge a constant.

    The mutation point is uniform over nonterminal nodes and constant
    leaves.  A nonterminal is regrown with its remaining depth budget; a
    constant gets a Gaussian step of width ``const_sigma``.
    """
    sites = [
        (n, lv, p) for n, lv, p in t.walk() if not n.is_terminal or n.symbol.constant
    ]
    n, lv, path = sites[int(rng.integers(len(sites)))]
    return _mutate_at(t, n, lv, path, g, di, max_depth, rng, const_sigma, const_range)


def _mutate_at(t, n, lv, path, g, di, max_depth, rng, const_sigma, const_range):
    if n.is_terminal:
        new = Node(n.symbol, value=float(n.value + rng.normal(0.0, const_sigma)))
    else:
        new = grow(n.symbol, g, di, max_depth - lv, rng, const_range)
    return replace_subtree(t, path, new)


def regrow_at(t: Node, path: Sequence[int], g, di, max_depth, rng, const_range=CONST_RANGE) -> Node:
    """Mutation at a given node; ``regrow_at(t, ())`` is a fresh ``init_tree``."""
    n = subtree_at(t, path)
    return _mutate_at(t, n, len(path), tuple(path), g, di, max_depth, rng, 1.0, const_range)


def check_tree(t: Node, g: Grammar, max_depth: int | None = None) -> list[str]:
    """Structural problems of ``t`` as messages; empty when the tree is valid."""
    problems = []
    if t.symbol != g.start:
        problems.append(f"root is {t.symbol.name!r}, not the start symbol")
    if max_depth is not None and t.depth > max_depth:
        problems.append(f"depth {t.depth} exceeds {max_depth}")
    for n, _, path in t.walk():
        if n.is_terminal:
            if n.children:
                problems.append(f"terminal with children at {path}")
            if n.symbol.constant and (n.value is None or not math.isfinite(n.value)):
                problems.append(f"constant leaf without value at {path}")
            continue
        p = n.production
        if p is None or p.lhs != n.symbol:
            problems.append(f"bad production at {path}")
            continue
        if g.production_lookup.get((p.lhs.name, tuple(s.name for s in p.rhs))) != p:
            problems.append(f"production not in grammar at {path}")
        if tuple(c.symbol for c in n.children) != p.rhs:
            problems.append(f"children do not match rhs at {path}")
        if not n.children:
            problems.append(f"nonterminal leaf at {path}")
    return problems


# -- decoding ----------------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """Decoded expression: display text plus a nested-tuple syntax tree.

    ``ast`` nodes are ``("var", name)``, ``("const", value)``,
    ``(op, left, right)`` for binary operators and ``(fn, arg)`` for unary
    functions.
    """

    text: str
    ast: tuple = field(repr=False)

    @classmethod
    def parse(cls, text: str) -> "Expression":
        return cls(text, parse_tokens(tokenize(text)))

    @property
    def variables(self) -> set[str]:
        out: set[str] = set()

        def rec(node):
            if node[0] == "var":
                out.add(node[1])
            elif node[0] != "const":
                for c in node[1:]:
                    rec(c)

        rec(self.ast)
        return out


def _format_const(v: float) -> str:
    return repr(float(v))


def decode(t: Node) -> Expression:
    """Concatenate the terminal leaves left to right; build the syntax tree alongside.

    Fully parenthesized binary and unary productions map straight onto
    syntax-tree nodes; any other production shape falls back to parsing
    the token sequence.
    """
    tokens = []
    for leaf in t.leaves():
        if leaf.symbol.constant:
            tokens.append(float(leaf.value))
        else:
            tokens.append(leaf.symbol.name)
    text = "".join(_format_const(x) if isinstance(x, float) else x for x in tokens)
    try:
        tree = _ast_of(t)
    except _Unstructured:
        tree = parse_tokens(tokens)
    return Expression(text, tree)


class _Unstructured(Exception):
    pass


def _ast_of(n: Node) -> tuple:
    if n.is_terminal:
        if n.symbol.constant:
            return ("const", float(n.value))
        if n.symbol.name in BINARY_OPS or n.symbol.name in ("(", ")"):
            raise _Unstructured
        return ("var", n.symbol.name)
    ch = n.children
    if len(ch) == 1:
        return _ast_of(ch[0])
    names = [c.symbol.name if c.is_terminal else None for c in ch]
    if len(ch) == 5 and names[0] == "(" and names[4] == ")" and names[2] in BINARY_OPS:
        return (names[2], _ast_of(ch[1]), _ast_of(ch[3]))
    if len(ch) == 4 and names[0] in UNARY_OPS and names[1] == "(" and names[3] == ")":
        return (names[0], _ast_of(ch[2]))
    raise _Unstructured


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/()]))"
)


def tokenize(text: str) -> list:
    out, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise ValueError(f"cannot tokenize {text[pos:]!r}")
        if m.group("num") is not None:
            out.append(float(m.group("num")))
        else:
            out.append(m.group("name") or m.group("op"))
        pos = m.end()
    return out


def parse_tokens(tokens: Sequence) -> tuple:
    """Precedence-climbing parse of an infix token list."""
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def expect(tok):
        if peek() != tok:
            raise ValueError(f"expected {tok!r} at token {pos} of {list(tokens)!r}")
        take()

    def expr():
        node = term()
        while peek() in ("+", "-"):
            op = take()
            node = (op, node, term())
        return node

    def term():
        node = factor()
        while peek() in ("*", "/"):
            op = take()
            node = (op, node, factor())
        return node

    def factor():
        tok = peek()
        if tok is None:
            raise ValueError(f"unexpected end of {list(tokens)!r}")
        if isinstance(tok, float):
            take()
            return ("const", tok)
        if tok == "-":
            take()
            inner = factor()
            if inner[0] == "const":
                return ("const", -inner[1])
            return ("neg", inner)
        if tok == "(":
            take()
            node = expr()
            expect(")")
            return node
        if tok in UNARY_OPS:
            take()
            expect("(")
            node = expr()
            expect(")")
            return (tok, node)
        if isinstance(tok, str) and tok not in BINARY_OPS and tok != ")":
            take()
            return ("var", tok)
        raise ValueError(f"unexpected token {tok!r}")

    node = expr()
    if pos != len(tokens):
        raise ValueError(f"trailing tokens {list(tokens[pos:])!r}")
    return node


_UNARY_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "neg": np.negative,
}


def evaluate(e: Expression, bindings: Mapping[str, float | np.ndarray]):
    """Evaluate with plain real arithmetic.

    Bindings may be scalars or equal-length arrays (one entry per fitness
    case).  No protected division: any non-finite intermediate raises.

    Raises
    ------
    NonFiniteError
        Division by zero, overflow or a domain error anywhere in the tree.
    KeyError
        A variable has no binding.
    """

    def check(x):
        if not np.all(np.isfinite(x)):
            raise NonFiniteError(f"non-finite value while evaluating {e.text}")
        return x

    def rec(node):
        tag = node[0]
        if tag == "var":
            return check(bindings[node[1]])
        if tag == "const":
            return node[1]
        if len(node) == 2:
            return check(_UNARY_FUNCS[tag](rec(node[1])))
        a, b = rec(node[1]), rec(node[2])
        if tag == "+":
            return check(a + b)
        if tag == "-":
            return check(a - b)
        if tag == "*":
            return check(a * b)
        return check(np.divide(a, b))

    with np.errstate(all="ignore"):
        out = rec(e.ast)
    if np.ndim(out) == 0:
        return float(out)
    return out


def expression_unit(e: Expression, var_units: Mapping[str, Unit]) -> Unit | None:
    """Bottom-up unit of ``e``, or None if it adds or subtracts mismatched units."""

    def rec(node):
        tag = node[0]
        if tag == "var":
            return var_units[node[1]]
        if tag == "const":
            return Unit.dimensionless(len(next(iter(var_units.values()))))
        if len(node) == 2:
            u = rec(node[1])
            if u is None:
                return None
            if tag == "neg":
                return u
            return u if u.is_dimensionless else None
        a, b = rec(node[1]), rec(node[2])
        if a is None or b is None:
            return None
        if tag in ("+", "-"):
            return a if a == b else None
        if tag == "*":
            return Unit(*(x + y for x, y in zip(a, b)))
        return Unit(*(x - y for x, y in zip(a, b)))

    return rec(e.ast)


# -- prefix text form ----------------------------------------------------------


def _leaf_text(n: Node) -> str:
    if n.symbol.constant:
        return _format_const(n.value)
    name = n.symbol.name
    if re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", name):
        return name
    return '"' + name + '"'


def tree_to_text(t: Node) -> str:
    """Nested prefix form, e.g. ``(S (N_{0,1,0} d))``."""
    if t.is_terminal:
        return _leaf_text(t)
    return "(" + " ".join([t.symbol.name] + [tree_to_text(c) for c in t.children]) + ")"


_PREFIX_RE = re.compile(r'\s*(\(|\)|"[^"]*"|[^\s()"]+)')


def tree_from_text(text: str, g: Grammar) -> Node:
    """Inverse of :func:`tree_to_text`; the root may be any nonterminal of ``g``."""
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _PREFIX_RE.match(text, pos)
        if m is None:
            raise MalformedGrammar(f"cannot parse tree text at {text[pos:pos + 20]!r}")
        toks.append(m.group(1))
        pos = m.end()

    const = g.constant_terminal
    terminals = {t.name: t for t in g.terminals}
    idx = 0

    def parse_node() -> Node:
        nonlocal idx
        if toks[idx] != "(":
            raise MalformedGrammar(f"expected '(' at token {idx}")
        sym = g.symbol(toks[idx + 1])
        idx += 2
        children = []
        while toks[idx] != ")":
            tok = toks[idx]
            if tok == "(":
                children.append(parse_node())
                continue
            idx += 1
            name = tok[1:-1] if tok.startswith('"') else tok
            if name in terminals:
                children.append(Node(terminals[name]))
            elif const is not None:
                children.append(Node(const, value=float(tok)))
            else:
                raise MalformedGrammar(f"unknown terminal {tok!r}")
        idx += 1
        rhs = tuple(c.symbol.name for c in children)
        p = g.production_lookup.get((sym.name, rhs))
        if p is None:
            raise MalformedGrammar(f"no production {sym.name} -> {' '.join(rhs)}")
        return Node(sym, p, tuple(children))

    try:
        tree = parse_node()
    except (IndexError, KeyError, ValueError) as exc:
        raise MalformedGrammar(f"cannot parse tree text: {exc}") from None
    if idx != len(toks):
        raise MalformedGrammar("trailing tokens in tree text")
    return tree
