"""Murcko scaffolds, scaffold keys and deterministic scaffold splits."""

from __future__ import annotations

import csv
import hashlib
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from molfusion.errors import DegenerateSplit
from molfusion.smiles import Bond, MolecularGraph

FOLDS = ("train", "valid", "test")
DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)

_DIGEST_BYTES = 16


@dataclass(frozen=True, order=True)
class ScaffoldKey:
    hash: int
    empty: bool


EMPTY_SCAFFOLD_KEY = ScaffoldKey(
    int.from_bytes(hashlib.blake2b(b"", digest_size=_DIGEST_BYTES).digest(), "big"),
    True,
)


@dataclass(frozen=True)
class SplitAssignment:
    folds: tuple[str, ...]
    fractions: tuple[float, float, float]

    def indices(self, fold: str) -> list[int]:
        return [i for i, f in enumerate(self.folds) if f == fold]

    def sizes(self) -> dict[str, int]:
        return {f: sum(1 for x in self.folds if x == f) for f in FOLDS}


def murcko_scaffold(g: MolecularGraph) -> MolecularGraph:
    """Strip side chains by repeatedly deleting atoms of degree <= 1.

    Ring atoms never reach degree 1, so ring systems and the linkers between
    them survive. Acyclic molecules reduce to the empty graph.
    """
    alive = [True] * g.num_atoms
    degree = [g.degree(i) for i in range(g.num_atoms)]
    stack = [i for i in range(g.num_atoms) if degree[i] <= 1]
    while stack:
        i = stack.pop()
        if not alive[i]:
            continue
        alive[i] = False
        for j, _ in g.neighbors[i]:
            if alive[j]:
                degree[j] -= 1
                if degree[j] <= 1:
                    stack.append(j)

    new_index = {}
    for i, keep in enumerate(alive):
        if keep:
            new_index[i] = len(new_index)
    atoms = tuple(g.atoms[i] for i in new_index)
    bonds = tuple(
        Bond(new_index[b.a], new_index[b.b], b.order)
        for b in g.bonds
        if alive[b.a] and alive[b.b]
    )
    return MolecularGraph(atoms, bonds)


def _digest(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=_DIGEST_BYTES).hexdigest()


def scaffold_key(s: MolecularGraph) -> ScaffoldKey:
    """Weisfeiler-Lehman hash of a scaffold graph (|V| refinement rounds)."""
    n = s.num_atoms
    if n == 0:
        return EMPTY_SCAFFOLD_KEY
    labels = [
        _digest(f"{a.element}|{int(a.aromatic)}|{s.degree(i)}")
        for i, a in enumerate(s.atoms)
    ]
    for _ in range(n):
        labels = [
            _digest(
                labels[v]
                + ";"
                + ",".join(sorted(f"{labels[u]}:{order}" for u, order in s.neighbors[v]))
            )
            for v in range(n)
        ]
    final = hashlib.blake2b(
        "|".join(sorted(labels)).encode("ascii"), digest_size=_DIGEST_BYTES
    ).digest()
    return ScaffoldKey(int.from_bytes(final, "big"), False)


def scaffold_split(
    dataset: Sequence[MolecularGraph],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    keys: Sequence[ScaffoldKey] | None = None,
) -> SplitAssignment:
    """Greedy largest-group-first scaffold split.

    Scaffold groups are ordered by size (descending) then key hash (ascending)
    and poured whole into train, then valid, then test. ``keys`` may be passed
    to skip recomputing scaffold keys.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    if keys is None:
        keys = [scaffold_key(murcko_scaffold(g)) for g in dataset]

    groups: dict[ScaffoldKey, list[int]] = defaultdict(list)
    for i, key in enumerate(keys):
        groups[key].append(i)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0].hash))

    f_train, f_valid, _ = fractions
    folds = [""] * n
    counts = {"train": 0, "valid": 0, "test": 0}
    for _, members in ordered:
        # the epsilon keeps f*n == integer from spilling one extra group
        if counts["train"] + 1e-9 < f_train * n:
            fold = "train"
        elif counts["valid"] + 1e-9 < f_valid * n:
            fold = "valid"
        else:
            fold = "test"
        counts[fold] += len(members)
        for i in members:
            folds[i] = fold

    empty = [f for f in FOLDS if counts[f] == 0]
    if empty:
        raise DegenerateSplit(
            f"fold(s) {', '.join(empty)} received no molecules (sizes {counts})"
        )
    return SplitAssignment(tuple(folds), fractions)


def write_manifest(path, smiles: Sequence[str], split: SplitAssignment,
                   indices: Sequence[int] | None = None) -> None:
    """Write ``index,smiles,fold`` rows; ``indices`` maps rows to dataset rows."""
    if indices is None:
        indices = range(len(smiles))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "smiles", "fold"])
        for idx, smi, fold in zip(indices, smiles, split.folds):
            w.writerow([idx, smi, fold])


def read_manifest(path) -> tuple[list[int], list[str], list[str]]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (
        [int(r["index"]) for r in rows],
        [r["smiles"] for r in rows],
        [r["fold"] for r in rows],
    )
