"""BNF grammars, dimensional grammar generation, depth index and tree counting.

A grammar is the usual 4-tuple (start, nonterminals, terminals, productions).
:func:`generate_dimensional_grammar` builds one nonterminal ``N_{i,j,k}`` per
representable unit, so that every complete derivation is dimensionally
consistent by construction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

from .errors import MalformedGrammar, NoTerminalDerivation
from .units import DEFAULT_RANGE, ExponentRange, Unit, format_unit, parse_unit

INF = math.inf

BINARY_OPS = ("+", "-", "*", "/")
# unary functions only make sense on dimensionless arguments
UNARY_OPS = ("exp", "log", "sin", "cos", "tanh")
PUNCTUATION = ("(", ")")

CONST_NAME = "const"


@dataclass(frozen=True)
class Symbol:
    """Grammar symbol.

    ``unit`` is set for nonterminals of a dimensional grammar and for
    dimensioned terminals (variables, constants); operators carry none.
    ``constant`` marks the ephemeral-random-constant terminal, whose leaves
    hold a sampled value.
    """

    name: str
    terminal: bool
    unit: Unit | None = None
    constant: bool = False

    def __post_init__(self):
        # symbols are dict keys on every hot path
        object.__setattr__(
            self, "_hash", hash((self.name, self.terminal, self.unit, self.constant))
        )

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return self.name


def nonterminal(name: str, unit: Unit | None = None) -> Symbol:
    return Symbol(name, False, unit)


def terminal(name: str, unit: Unit | None = None, constant: bool = False) -> Symbol:
    return Symbol(name, True, unit, constant)


@dataclass(frozen=True)
class Production:
    lhs: Symbol
    rhs: tuple[Symbol, ...]

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.lhs, self.rhs)))
        if self.lhs.terminal:
            raise MalformedGrammar(f"production lhs {self.lhs.name!r} is a terminal")
        if not self.rhs:
            raise MalformedGrammar(f"empty rhs for {self.lhs.name!r}")

    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return f"{_ref(self.lhs)} ::= " + " ".join(_ref(s) for s in self.rhs)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    unit: Unit


@dataclass(frozen=True)
class OperatorSet:
    """Which operators a generated grammar may use."""

    binary: tuple[str, ...] = BINARY_OPS
    unary: tuple[str, ...] = ()

    def __post_init__(self):
        bad = [op for op in self.binary if op not in BINARY_OPS]
        bad += [op for op in self.unary if op not in UNARY_OPS]
        if bad:
            raise ValueError(f"unsupported operators: {bad}")


DEFAULT_OPS = OperatorSet()


class Grammar:
    """Immutable context-free grammar.

    Parameters
    ----------
    start : Symbol
        Start nonterminal.
    nonterminals, terminals : sequence of Symbol
        Declared symbols, names unique across both sets.
    productions : sequence of Production
        Kept in the given order; the order defines production indices.
    """

    def __init__(
        self,
        start: Symbol,
        nonterminals: Sequence[Symbol],
        terminals: Sequence[Symbol],
        productions: Sequence[Production],
    ):
        self.start = start
        self.nonterminals = tuple(nonterminals)
        self.terminals = tuple(terminals)
        self.productions = tuple(productions)
        self._validate()
        rules: dict[Symbol, list[Production]] = {nt: [] for nt in self.nonterminals}
        for p in self.productions:
            rules[p.lhs].append(p)
        self.rules: Mapping[Symbol, tuple[Production, ...]] = {
            k: tuple(v) for k, v in rules.items()
        }

    def _validate(self) -> None:
        names = [s.name for s in self.nonterminals + self.terminals]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise MalformedGrammar(f"duplicate symbol names: {sorted(dup)}")
        if any(s.terminal for s in self.nonterminals):
            raise MalformedGrammar("terminal listed among nonterminals")
        if any(not s.terminal for s in self.terminals):
            raise MalformedGrammar("nonterminal listed among terminals")
        declared = set(self.nonterminals) | set(self.terminals)
        if self.start not in declared or self.start.terminal:
            raise MalformedGrammar(f"start symbol {self.start.name!r} not a declared nonterminal")
        for p in self.productions:
            for s in (p.lhs,) + p.rhs:
                if s not in declared:
                    kind = "terminal" if s.terminal else "nonterminal"
                    raise MalformedGrammar(f"undeclared {kind} {s.name!r} in {p}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Grammar):
            return NotImplemented
        return (
            self.start == other.start
            and self.nonterminals == other.nonterminals
            and self.terminals == other.terminals
            and self.productions == other.productions
        )

    def __hash__(self):
        return hash((self.start, self.productions))

    def __repr__(self) -> str:
        return (
            f"Grammar(start={self.start.name!r}, {len(self.nonterminals)} nonterminals, "
            f"{len(self.terminals)} terminals, {len(self.productions)} productions)"
        )

    def symbol(self, name: str) -> Symbol:
        return self._by_name[name]

    @cached_property
    def _by_name(self) -> dict[str, Symbol]:
        return {s.name: s for s in self.nonterminals + self.terminals}

    @cached_property
    def depth_index(self) -> "DepthIndex":
        return compute_depth_index(self)

    @cached_property
    def production_lookup(self) -> dict[tuple[str, tuple[str, ...]], Production]:
        """``(lhs name, rhs names) -> production``."""
        return {(p.lhs.name, tuple(s.name for s in p.rhs)): p for p in self.productions}

    @cached_property
    def constant_terminal(self) -> Symbol | None:
        for t in self.terminals:
            if t.constant:
                return t
        return None


class DepthIndex(dict):
    """Symbol -> depth of the smallest complete derivation tree rooted there.

    Terminals map to 0, underivable nonterminals to ``math.inf``.
    """

    def production_depth(self, p: Production) -> float:
        """Smallest depth of a tree whose root uses production ``p``."""
        return 1 + max(self[s] for s in p.rhs)


def compute_depth_index(g: Grammar) -> DepthIndex:
    """Least fixpoint of ``depth(A) = 1 + min_p max_{s in rhs(p)} depth(s)``."""
    di = DepthIndex()
    for t in g.terminals:
        di[t] = 0
    for nt in g.nonterminals:
        di[nt] = INF
    changed = True
    while changed:
        changed = False
        for p in g.productions:
            d = 1 + max(di[s] for s in p.rhs)
            if d < di[p.lhs]:
                di[p.lhs] = d
                changed = True
    return di


def prune(g: Grammar) -> Grammar:
    """Drop nonterminals with infinite depth index and every production using them."""
    di = compute_depth_index(g)
    keep = [nt for nt in g.nonterminals if di[nt] < INF]
    if g.start not in keep:
        raise NoTerminalDerivation(
            f"start symbol {g.start.name!r} cannot be rewritten into terminals"
        )
    kept = set(keep)
    prods = [
        p for p in g.productions
        if p.lhs in kept and all(s.terminal or s in kept for s in p.rhs)
    ]
    return Grammar(g.start, keep, g.terminals, prods)


def unit_nonterminal_name(u: Unit) -> str:
    return "N_{" + ",".join(str(e) for e in u) + "}"


def _punctuation(ops: OperatorSet) -> dict[str, Symbol]:
    syms = {name: terminal(name) for name in PUNCTUATION}
    for op in ops.binary + ops.unary:
        syms[op] = terminal(op)
    return syms


def generate_dimensional_grammar(
    variables: Sequence[VariableSpec],
    target: Unit,
    rng: ExponentRange = DEFAULT_RANGE,
    ops: OperatorSet = DEFAULT_OPS,
    constants: bool = True,
    do_prune: bool = True,
) -> Grammar:
    """Grammar whose sentences are exactly the well-dimensioned expressions.

    One nonterminal per unit in ``rng``.  Each gets ``+``/``-`` over two
    same-unit operands, ``*`` over every in-range pair of units summing to
    it, ``/`` over every in-range pair differing to it, its variables, and
    (dimensionless nonterminal only) the constant terminal and the selected
    unary functions.  The start symbol ``S`` rewrites to the target unit.

    Raises
    ------
    NoTerminalDerivation
        If the target unit cannot be built from ``variables``.
    """
    if not variables:
        raise ValueError("at least one variable is required")
    ndim = len(target)
    rng.check(target)
    names = [v.name for v in variables]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate variable names: {names}")
    for v in variables:
        if len(v.unit) != ndim:
            raise ValueError(f"variable {v.name!r} has {len(v.unit)} dimensions, expected {ndim}")

    units = list(rng.units(ndim))
    nts = {u: nonterminal(unit_nonterminal_name(u), u) for u in units}
    start = nonterminal("S", target)
    punct = _punctuation(ops)
    lp, rp = punct["("], punct[")"]
    var_syms = [terminal(v.name, Unit(*v.unit)) for v in variables]
    zero = Unit.dimensionless(ndim)
    const = terminal(CONST_NAME, zero, constant=True) if constants else None

    prods: list[Production] = [Production(start, (nts[target],))]
    for u in units:
        lhs = nts[u]
        for op in ("+", "-"):
            if op in ops.binary:
                prods.append(Production(lhs, (lp, lhs, punct[op], lhs, rp)))
        if "*" in ops.binary:
            for a in units:
                b = Unit(*(x - y for x, y in zip(u, a)))
                if b in rng:
                    prods.append(Production(lhs, (lp, nts[a], punct["*"], nts[b], rp)))
        if "/" in ops.binary:
            for a in units:
                b = Unit(*(x - y for x, y in zip(a, u)))
                if b in rng:
                    prods.append(Production(lhs, (lp, nts[a], punct["/"], nts[b], rp)))
        if u == zero:
            for fn in ops.unary:
                prods.append(Production(lhs, (punct[fn], lp, lhs, rp)))
        for vs in var_syms:
            if vs.unit == u:
                prods.append(Production(lhs, (vs,)))
        if const is not None and u == zero:
            prods.append(Production(lhs, (const,)))

    terms = list(punct.values()) + var_syms + ([const] if const is not None else [])
    g = Grammar(start, [start] + [nts[u] for u in units], terms, prods)
    return prune(g) if do_prune else g


def generate_untyped_grammar(
    variables: Sequence[VariableSpec],
    ops: OperatorSet = DEFAULT_OPS,
    constants: bool = True,
) -> Grammar:
    """The unit-blind counterpart: a single expression nonterminal ``expr``."""
    if not variables:
        raise ValueError("at least one variable is required")
    start = nonterminal("S")
    expr = nonterminal("expr")
    punct = _punctuation(ops)
    lp, rp = punct["("], punct[")"]
    var_syms = [terminal(v.name, Unit(*v.unit)) for v in variables]
    ndim = len(variables[0].unit)
    const = terminal(CONST_NAME, Unit.dimensionless(ndim), constant=True) if constants else None
    prods = [Production(start, (expr,))]
    for op in ops.binary:
        prods.append(Production(expr, (lp, expr, punct[op], expr, rp)))
    for fn in ops.unary:
        prods.append(Production(expr, (punct[fn], lp, expr, rp)))
    prods += [Production(expr, (vs,)) for vs in var_syms]
    if const is not None:
        prods.append(Production(expr, (const,)))
    terms = list(punct.values()) + var_syms + ([const] if const is not None else [])
    return Grammar(start, [start, expr], terms, prods)


def count_trees_by_depth(g: Grammar, max_depth: int) -> list[dict[Symbol, int]]:
    """``result[d][A]`` = number of complete derivation trees rooted at ``A`` of depth <= d."""
    if max_depth < 0:
        raise ValueError("max_depth must be >= 0")
    levels = [{nt: 0 for nt in g.nonterminals}]
    for _ in range(max_depth):
        prev = levels[-1]
        cur = {}
        for nt in g.nonterminals:
            total = 0
            for p in g.rules[nt]:
                term = 1
                for s in p.rhs:
                    if not s.terminal:
                        term *= prev[s]
                        if term == 0:
                            break
                total += term
            cur[nt] = total
        levels.append(cur)
    return levels


def count_trees(g: Grammar, max_depth: int) -> int:
    """Exact number of derivation trees from the start symbol with depth <= ``max_depth``.

    Trees are identified by their production choices.  Python integers keep
    the result exact; counts pass 10**23 well before depth 20.
    """
    return count_trees_by_depth(g, max_depth)[max_depth][g.start]


# -- text format -------------------------------------------------------------
#
#   %start <S>
#   %nonterminal <N_{1,1,-2}> (1,1,-2)
#   %terminal d (0,1,0)
#   %terminal const (0,0,0) constant
#   %terminal "+"
#   <S> ::= <N_{1,1,-2}>

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _ref(s: Symbol) -> str:
    if not s.terminal:
        return f"<{s.name}>"
    if _IDENT.match(s.name):
        return s.name
    return '"' + s.name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_grammar(g: Grammar) -> str:
    lines = [f"%start {_ref(g.start)}"]
    for nt in g.nonterminals:
        line = f"%nonterminal {_ref(nt)}"
        if nt.unit is not None:
            line += f" {format_unit(nt.unit)}"
        lines.append(line)
    for t in g.terminals:
        line = f"%terminal {_ref(t)}"
        if t.unit is not None:
            line += f" {format_unit(t.unit)}"
        if t.constant:
            line += " constant"
        lines.append(line)
    lines.extend(str(p) for p in g.productions)
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r'\s*(<[^<>\s]+>|"(?:[^"\\]|\\.)*"|\S+)')


def _tokens(text: str) -> list[str]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            break
        out.append(m.group(1))
        pos = m.end()
    return out


def _unref(tok: str) -> tuple[str, bool]:
    """Return (name, is_terminal) for a symbol reference token."""
    if tok.startswith("<") and tok.endswith(">"):
        return tok[1:-1], False
    if tok.startswith('"') and tok.endswith('"') and len(tok) >= 2:
        return re.sub(r"\\(.)", r"\1", tok[1:-1]), True
    return tok, True


def import_grammar(text: str) -> Grammar:
    """Parse the output of :func:`export_grammar`.

    Raises
    ------
    MalformedGrammar
        On syntax errors or references to undeclared symbols; the message
        carries the 1-based line number.
    """
    start_name = None
    nts: dict[str, Symbol] = {}
    terms: dict[str, Symbol] = {}
    raw_prods: list[tuple[int, str, list[str]]] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        toks = _tokens(stripped)
        try:
            if toks[0] == "%start":
                name, is_term = _unref(toks[1])
                if is_term:
                    raise MalformedGrammar("start symbol must be a nonterminal")
                start_name = name
            elif toks[0] == "%nonterminal":
                name, is_term = _unref(toks[1])
                if is_term:
                    raise MalformedGrammar(f"{toks[1]} is not a nonterminal reference")
                unit = parse_unit(toks[2], None) if len(toks) > 2 else None
                if len(toks) > 3:
                    raise MalformedGrammar("trailing tokens")
                nts[name] = nonterminal(name, unit)
            elif toks[0] == "%terminal":
                name, is_term = _unref(toks[1])
                if not is_term:
                    raise MalformedGrammar(f"{toks[1]} is not a terminal reference")
                rest = toks[2:]
                constant = bool(rest) and rest[-1] == "constant"
                if constant:
                    rest = rest[:-1]
                unit = parse_unit(rest[0], None) if rest else None
                if len(rest) > 1:
                    raise MalformedGrammar("trailing tokens")
                terms[name] = terminal(name, unit, constant)
            elif len(toks) >= 3 and toks[1] == "::=":
                raw_prods.append((lineno, toks[0], toks[2:]))
            else:
                raise MalformedGrammar("unrecognised line")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MalformedGrammar):
                raise MalformedGrammar(f"line {lineno}: {exc}") from None
            raise MalformedGrammar(f"line {lineno}: {exc or 'missing token'}") from None

    if start_name is None:
        raise MalformedGrammar("missing %start line")

    def lookup(tok: str, lineno: int) -> Symbol:
        name, is_term = _unref(tok)
        table = terms if is_term else nts
        if name not in table:
            kind = "terminal" if is_term else "nonterminal"
            raise MalformedGrammar(f"line {lineno}: undeclared {kind} {tok}")
        return table[name]

    prods = []
    for lineno, lhs_tok, rhs_toks in raw_prods:
        lhs = lookup(lhs_tok, lineno)
        if lhs.terminal:
            raise MalformedGrammar(f"line {lineno}: lhs {lhs_tok} is a terminal")
        prods.append(Production(lhs, tuple(lookup(t, lineno) for t in rhs_toks)))
    if start_name not in nts:
        raise MalformedGrammar(f"undeclared start symbol <{start_name}>")
    return Grammar(nts[start_name], list(nts.values()), list(terms.values()), prods)


def default_indentation_variables() -> list[VariableSpec]:
    """Displacement, its rate, a modulus and a viscosity."""
    return [
        VariableSpec("d", Unit(0, 1, 0)),
        VariableSpec("v", Unit(0, 1, -1)),
        VariableSpec("E", Unit(1, -1, -2)),
        VariableSpec("eta", Unit(1, -1, -1)),
    ]


NEWTON = Unit(1, 1, -2)


def default_dimensional_grammar(**kwargs) -> Grammar:
    return generate_dimensional_grammar(default_indentation_variables(), NEWTON, **kwargs)
