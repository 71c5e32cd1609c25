import csv

import pytest
from hypothesis import given
from hypothesis import strategies as st

from molfusion.errors import DegenerateSplit
from molfusion.scaffold import (
    EMPTY_SCAFFOLD_KEY,
    ScaffoldKey,
    murcko_scaffold,
    read_manifest,
    scaffold_key,
    scaffold_split,
    write_manifest,
)
from molfusion.smiles import parse
from molfusion.synthetic import load_corpus


def test_benzene_is_fixpoint():
    g = parse("c1ccccc1")
    assert murcko_scaffold(g) == g


def test_side_chain_pruned():
    s = murcko_scaffold(parse("CCc1ccccc1"))
    assert s == parse("c1ccccc1")


def test_linker_retained():
    s = murcko_scaffold(parse("Clc1ccccc1CCC1CC1O"))
    assert len(s.atoms) == 6 + 2 + 3


def test_acyclic_gives_empty():
    assert murcko_scaffold(parse("CCCC")).atoms == ()
    assert murcko_scaffold(parse("[Na+].[Cl-]")).atoms == ()


def test_exocyclic_double_bond_pruned_by_degree_rule():
    # C=O on the ring: O has degree 1 and goes
    s = murcko_scaffold(parse("O=C1CCCCC1"))
    assert [a.element for a in s.atoms] == ["C"] * 6


def test_key_permutation_invariant():
    g = parse("c1ccncc1")
    assert scaffold_key(g) == scaffold_key(g.permute([3, 1, 5, 0, 2, 4]))


def test_key_distinguishes_aromaticity():
    assert scaffold_key(parse("c1ccccc1")) != scaffold_key(parse("C1CCCCC1"))


def test_key_distinguishes_linker_length():
    a = murcko_scaffold(parse("c1ccccc1CC1CC1"))
    b = murcko_scaffold(parse("c1ccccc1CCC1CC1"))
    assert scaffold_key(a) != scaffold_key(b)


def test_empty_scaffolds_share_key():
    a = scaffold_key(murcko_scaffold(parse("CCO")))
    b = scaffold_key(murcko_scaffold(parse("CC(C)N")))
    assert a == b == EMPTY_SCAFFOLD_KEY and a.empty


def test_idempotent_on_corpus():
    for smi in load_corpus():
        s = murcko_scaffold(parse(smi))
        assert murcko_scaffold(s) == s


def _fake_keys(sizes):
    keys = []
    for i, n in enumerate(sizes):
        keys += [ScaffoldKey(1000 + i, False)] * n
    return keys


def test_single_group_degenerate():
    graphs = [parse("c1ccccc1C")] * 10
    with pytest.raises(DegenerateSplit):
        scaffold_split(graphs, (0.8, 0.1, 0.1))


def test_greedy_groups_6_2_2():
    keys = _fake_keys([6, 2, 2])
    split = scaffold_split([None] * 10, (0.6, 0.2, 0.2), keys=keys)
    assert split.folds == ("train",) * 6 + ("valid",) * 2 + ("test",) * 2


def test_singletons_80_10_10():
    keys = _fake_keys([1] * 100)
    split = scaffold_split([None] * 100, (0.8, 0.1, 0.1), keys=keys)
    assert split.sizes() == {"train": 80, "valid": 10, "test": 10}


def test_ties_broken_by_hash():
    # two groups of equal size: smaller hash goes first (train)
    keys = [ScaffoldKey(9, False)] * 3 + [ScaffoldKey(2, False)] * 3 + [ScaffoldKey(5, False)] * 2
    split = scaffold_split([None] * 8, (0.375, 0.375, 0.25), keys=keys)
    assert split.folds[3:6] == ("train",) * 3
    assert split.folds[:3] == ("valid",) * 3


@given(st.lists(st.integers(1, 12), min_size=3, max_size=40))
def test_split_properties(sizes):
    keys = _fake_keys(sizes)
    n = len(keys)
    try:
        split = scaffold_split([None] * n, (0.8, 0.1, 0.1), keys=keys)
    except DegenerateSplit:
        return
    fold_of = {}
    for k, f in zip(keys, split.folds):
        assert fold_of.setdefault(k, f) == f
    sizes_out = split.sizes()
    largest = max(sizes)
    for fold, frac in zip(("train", "valid", "test"), (0.8, 0.1, 0.1)):
        assert abs(sizes_out[fold] - frac * n) <= largest + 1e-9


def test_split_deterministic_on_corpus():
    graphs = [parse(s) for s in load_corpus()]
    a = scaffold_split(graphs)
    b = scaffold_split(graphs)
    assert a == b


def test_bad_fractions():
    with pytest.raises(ValueError):
        scaffold_split([parse("C")], (0.5, 0.5, 0.5))
    with pytest.raises(ValueError):
        scaffold_split([], (0.8, 0.1, 0.1))


def test_manifest_round_trip(tmp_path):
    keys = _fake_keys([1] * 10)
    split = scaffold_split([None] * 10, keys=keys)
    smiles = [f"C{'C' * i}" for i in range(10)]
    write_manifest(tmp_path / "split.csv", smiles, split, indices=range(5, 15))
    idx, smi, folds = read_manifest(tmp_path / "split.csv")
    assert idx == list(range(5, 15)) and smi == smiles and tuple(folds) == split.folds
    with open(tmp_path / "split.csv") as fh:
        assert next(csv.reader(fh)) == ["index", "smiles", "fold"]
