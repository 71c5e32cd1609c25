"""Synthetic molecules for desk-scale benchmarks.

Each molecule is a halogen head atom, a chain of ring and linker units, and a
halogen tail atom. The label is 1 exactly when the molecule contains a
carboxamide ``C(=O)N`` linker (a local motif) AND its first and last atoms are
the same halogen (a relation between the two ends of the string).
"""

from __future__ import annotations

import csv
from importlib import resources

import numpy as np

HALOGENS = ("F", "Cl", "Br")
RINGS = (
    "c1ccccc1", "C1CCCCC1", "c1ccncc1", "C1CCNCC1", "c1ccsc1", "C1CCOC1",
    "c1ccc2ccccc2c1", "C1CC1", "c1cnoc1", "C1CCCC1", "c1ccoc1", "c1cncnc1",
)
LINKERS = ("C", "CC", "CCC", "O", "N", "CO", "S", "CN")
BRANCHES = ("(C)", "(O)", "(N)", "(CC)")
MOTIF = "C(=O)N"

BENCHMARK_FILE = "synthetic_benchmark.csv"
CORPUS_FILE = "corpus_1000.smi"


def _ring(rng) -> str:
    ring = RINGS[rng.integers(len(RINGS))]
    if rng.random() < 0.3:
        # hang a small branch off a ring atom (position after the ring digit)
        pos = 2 + int(rng.integers(len(ring) - 3))
        if ring[pos - 1].isalpha() and ring[pos].isalpha():
            ring = ring[:pos] + BRANCHES[rng.integers(len(BRANCHES))] + ring[pos:]
    return ring


def make_molecule(rng: np.random.Generator, motif: bool, same_ends: bool) -> str:
    head = HALOGENS[rng.integers(len(HALOGENS))]
    if same_ends:
        tail = head
    else:
        tail = HALOGENS[(HALOGENS.index(head) + 1 + rng.integers(2)) % 3]
    n_rings = 1 + int(rng.integers(3))
    units = []
    for i in range(n_rings):
        units.append(_ring(rng))
        if i < n_rings - 1:
            units.append(LINKERS[rng.integers(len(LINKERS))])
    if motif:
        # the motif replaces or joins one linker slot
        slot = 2 * int(rng.integers(n_rings)) + 1
        units.insert(min(slot, len(units)), MOTIF)
    return head + "".join(units) + tail


def make_benchmark(n: int = 1000, seed: int = 0) -> tuple[list[str], np.ndarray]:
    rng = np.random.default_rng(seed)
    smiles, labels = [], []
    for _ in range(n):
        motif = bool(rng.random() < 0.5)
        same = bool(rng.random() < 0.5)
        smiles.append(make_molecule(rng, motif, same))
        labels.append(int(motif and same))
    return smiles, np.array(labels)


def write_benchmark_csv(path, smiles, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["smiles", "label"])
        for s, y in zip(smiles, labels):
            w.writerow([s, int(y)])


def data_path(name: str):
    return resources.files("molfusion") / "data" / name


def load_corpus(path=None) -> list[str]:
    path = path or data_path(CORPUS_FILE)
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip()]
