import numpy as np
import pytest

from evosid.grammar import Grammar, Production, default_dimensional_grammar, nonterminal, terminal


def toy_grammar(text_rules: dict[str, list[list[str]]], start: str = "A") -> Grammar:
    """Grammar from ``{"A": [["x"], ["(", "A", "+", "A", ")"]]}``; keys are nonterminals, "const" is the constant terminal."""
    nts = {n: nonterminal(n) for n in text_rules}
    terms = {}
    prods = []
    for lhs, alts in text_rules.items():
        for rhs in alts:
            syms = []
            for s in rhs:
                if s in nts:
                    syms.append(nts[s])
                else:
                    syms.append(terms.setdefault(s, terminal(s, constant=s == "const")))
            prods.append(Production(nts[lhs], tuple(syms)))
    return Grammar(nts[start], list(nts.values()), list(terms.values()), prods)


@pytest.fixture(scope="session")
def dim_grammar():
    return default_dimensional_grammar()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """``record("AC-1", passed, detail)`` stores one acceptance verdict for the summary."""

    def _record(name: str, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[name] = (bool(passed), detail)
        print(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
        return bool(passed)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n.split("-")[1])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}: {detail}")
