import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molfusion.errors import (
    EmptyInput,
    IndexOutOfRange,
    InvalidBracketAtom,
    SmilesError,
    UnbalancedParentheses,
    UnclosedRingBond,
    UnknownAtomSymbol,
    UntokenizableCharacter,
)
from molfusion.smiles import AROMATIC, DOUBLE, SINGLE, TRIPLE, graph_distance, parse, tokenize
from molfusion.synthetic import load_corpus


@pytest.mark.parametrize("smiles, expected", [
    ("CC(=O)O", ["C", "C", "(", "=", "O", ")", "O"]),
    ("Clc1ccccc1", ["Cl", "c", "1", "c", "c", "c", "c", "c", "1"]),
    ("BrC%12CC%12", ["Br", "C", "%12", "C", "C", "%12"]),
    ("c1cc[nH]c1", ["c", "1", "c", "c", "[nH]", "c", "1"]),
    ("[Na+].[Cl-]", ["[Na+]", ".", "[Cl-]"]),
    ("C/C=C\\C", ["C", "/", "C", "=", "C", "\\", "C"]),
])
def test_tokenize_examples(smiles, expected):
    assert tokenize(smiles) == expected


def test_tokenize_empty():
    with pytest.raises(EmptyInput):
        tokenize("")


def test_tokenize_reports_position():
    with pytest.raises(UntokenizableCharacter) as info:
        tokenize("CCX")
    assert info.value.position == 2


def test_corpus_round_trip():
    for smi in load_corpus():
        assert "".join(tokenize(smi)) == smi


token_alphabet = st.sampled_from(
    ["C", "c", "N", "n", "O", "o", "S", "Cl", "Br", "F", "(", ")", "=", "#", "1", "2",
     "%10", "[nH]", "[O-]", "[NH4+]", ".", "/", "\\"]
)


@given(st.lists(token_alphabet, min_size=1, max_size=30))
def test_tokenize_joins_back(tokens):
    s = "".join(tokens)
    assert "".join(tokenize(s)) == s


@given(st.lists(token_alphabet, min_size=1, max_size=30))
@settings(max_examples=300)
def test_parse_validity_implies_tokenize_validity(tokens):
    s = "".join(tokens)
    try:
        parse(s)
    except SmilesError:
        return
    tokenize(s)


def test_single_atom():
    g = parse("C")
    assert len(g.atoms) == 1 and not g.atoms[0].aromatic and g.bonds == ()


def test_double_bond():
    g = parse("C=C")
    assert len(g.atoms) == 2
    assert [(b.a, b.b, b.order) for b in g.bonds] == [(0, 1, DOUBLE)]


def test_ring_closure_triangle():
    g = parse("C1CC1")
    assert len(g.atoms) == 3
    assert {(b.a, b.b) for b in g.bonds} == {(0, 1), (1, 2), (0, 2)}
    assert all(b.order == SINGLE for b in g.bonds)


def test_aromatic_bonds_inferred():
    g = parse("c1ccccc1")
    assert len(g.bonds) == 6 and all(b.order == AROMATIC for b in g.bonds)
    # explicit single bond between aromatic atoms (biphenyl link) stays single
    g = parse("c1ccccc1-c1ccccc1")
    assert sum(b.order == SINGLE for b in g.bonds) == 1


def test_bracket_atoms():
    g = parse("[13CH3][N+](C)(C)C.[O-]")
    a0, a1 = g.atoms[0], g.atoms[1]
    assert (a0.element, a0.explicit_h, a0.bracket) == ("C", 3, True)
    assert a1.formal_charge == 1
    assert g.atoms[-1].formal_charge == -1
    assert parse("[Fe+++]").atoms[0].formal_charge == 3
    assert parse("[Cu+2]").atoms[0].formal_charge == 2
    assert parse("[C@@H](F)(Cl)Br").atoms[0].explicit_h == 1


def test_fragments_stay_in_one_graph():
    g = parse("CC.O")
    assert len(g.atoms) == 3 and len(g.bonds) == 1


def test_triple_and_ring_bond_order():
    assert parse("C#N").bonds[0].order == TRIPLE
    g = parse("C=1CC1")
    assert {b.order for b in g.bonds if {b.a, b.b} == {0, 2}} == {DOUBLE}


@pytest.mark.parametrize("smiles, error", [
    ("C(", UnbalancedParentheses),
    ("C)C", UnbalancedParentheses),
    ("C1CC", UnclosedRingBond),
    ("[Xx]", InvalidBracketAtom),
    ("[C", UntokenizableCharacter),
    ("*C", UnknownAtomSymbol),
    ("C11", SmilesError),
    ("C12CC12", SmilesError),
])
def test_parse_errors(smiles, error):
    with pytest.raises(error):
        parse(smiles)


def test_parse_deterministic():
    for smi in load_corpus()[:100]:
        assert parse(smi) == parse(smi)


def test_alkane_bond_count():
    for n in range(1, 12):
        g = parse("C" * n)
        assert len(g.bonds) == len(g.atoms) - 1


def test_graph_distance():
    tri = parse("C1CC1")
    assert graph_distance(tri, 0, 2) == 1
    assert graph_distance(tri, 1, 1) == 0
    assert graph_distance(parse("CCCC"), 0, 3) == 3
    assert graph_distance(parse("C.C"), 0, 1) == math.inf
    with pytest.raises(IndexOutOfRange):
        graph_distance(tri, 0, 3)
