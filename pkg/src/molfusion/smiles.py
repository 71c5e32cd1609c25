"""SMILES tokenization and parsing into heavy-atom molecular graphs.

Supported subset: organic-subset atoms, bracket atoms (isotope, chirality and
atom class are parsed and dropped), ring closures including ``%NN``, branches,
the bond symbols ``- = # : / \\`` and ``.`` fragment separators. Directional
bonds are read as single bonds. No valence checks and no implicit hydrogens.
"""

from __future__ import annotations

import math
import re
from collections import deque
from dataclasses import dataclass
from functools import cached_property

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

TOKEN_PATTERN = (
    r"(\[[^\]]+\]|Br?|Cl?|N|O|S|P|F|I|b|c|n|o|s|p|\(|\)|\.|=|#|-|\+|\\|\/|:|~|@|\?|>|\*|\$|%[0-9]{2}|[0-9])"
)
_TOKEN_RE = re.compile(TOKEN_PATTERN)

ELEMENTS = (
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si",
    "P", "S", "Cl", "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co",
    "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr",
    "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",
    "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy",
    "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au",
    "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",
    "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db",
    "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og",
)
_ELEMENT_SET = frozenset(ELEMENTS)
ORGANIC_SUBSET = frozenset({"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"})
AROMATIC_SYMBOLS = {"b": "B", "c": "C", "n": "N", "o": "O", "s": "S", "p": "P"}

SINGLE, DOUBLE, TRIPLE, AROMATIC = "single", "double", "triple", "aromatic"
BOND_ORDERS = (SINGLE, DOUBLE, TRIPLE, AROMATIC)
_BOND_SYMBOLS = {"-": SINGLE, "=": DOUBLE, "#": TRIPLE, ":": AROMATIC, "/": SINGLE, "\\": SINGLE}

_BRACKET_RE = re.compile(
    r"^\[(?P<isotope>\d+)?"
    r"(?P<symbol>[A-Z][a-z]?|[a-z][a-z]?)"
    r"(?P<chiral>@(?:@|TH[12]|AL[12]|SP[1-3]|TB\d{1,2}|OH\d{1,2})?)?"
    r"(?P<hcount>H\d*)?"
    r"(?P<charge>[+-]+\d*)?"
    r"(?::(?P<cls>\d+))?\]$"
)


@dataclass(frozen=True)
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int = 0
    bracket: bool = False


@dataclass(frozen=True)
class Bond:
    a: int
    b: int
    order: str = SINGLE


@dataclass(frozen=True)
class MolecularGraph:
    atoms: tuple[Atom, ...]
    bonds: tuple[Bond, ...]

    def __len__(self):
        return len(self.atoms)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[int, str], ...], ...]:
        """Per atom, the ``(neighbor index, bond order)`` pairs in bond order."""
        adj: list[list[tuple[int, str]]] = [[] for _ in self.atoms]
        for bond in self.bonds:
            adj[bond.a].append((bond.b, bond.order))
            adj[bond.b].append((bond.a, bond.order))
        return tuple(tuple(x) for x in adj)

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def permute(self, order) -> "MolecularGraph":
        """Return the same molecule with atom ``order[k]`` placed at index ``k``."""
        order = list(order)
        if sorted(order) != list(range(len(self.atoms))):
            raise ValueError("order must be a permutation of the atom indices")
        new_index = {old: new for new, old in enumerate(order)}
        atoms = tuple(self.atoms[old] for old in order)
        bonds = tuple(
            Bond(new_index[b.a], new_index[b.b], b.order) for b in self.bonds
        )
        return MolecularGraph(atoms, bonds)


def tokenize(smiles: str) -> list[str]:
    """Split a SMILES string into chemical tokens.

    The joined tokens always reproduce ``smiles`` exactly.
    """
    if not smiles:
        raise EmptyInput("empty SMILES string")
    tokens = []
    pos = 0
    while pos < len(smiles):
        m = _TOKEN_RE.match(smiles, pos)
        if m is None:
            raise UntokenizableCharacter(smiles, pos)
        tokens.append(m.group(0))
        pos = m.end()
    return tokens


def _parse_bracket(token: str) -> Atom:
    m = _BRACKET_RE.match(token)
    if m is None:
        raise InvalidBracketAtom(f"malformed bracket atom {token!r}")
    symbol = m.group("symbol")
    if symbol in AROMATIC_SYMBOLS:
        element, aromatic = AROMATIC_SYMBOLS[symbol], True
    elif symbol in _ELEMENT_SET:
        element, aromatic = symbol, False
    else:
        raise InvalidBracketAtom(f"unknown element {symbol!r} in {token!r}")

    hcount = m.group("hcount")
    explicit_h = 0
    if hcount:
        explicit_h = int(hcount[1:]) if len(hcount) > 1 else 1

    charge = 0
    ctext = m.group("charge")
    if ctext:
        sign = 1 if ctext[0] == "+" else -1
        signs = len(ctext.rstrip("0123456789"))
        digits = ctext[signs:]
        if signs > 1 and digits:
            raise InvalidBracketAtom(f"ambiguous charge in {token!r}")
        if ctext[:signs].count(ctext[0]) != signs:
            raise InvalidBracketAtom(f"mixed charge signs in {token!r}")
        charge = sign * (int(digits) if digits else signs)
    return Atom(element, aromatic, charge, explicit_h, True)


def _atom_from_token(token: str) -> Atom | None:
    if token.startswith("["):
        return _parse_bracket(token)
    if token in ORGANIC_SUBSET:
        return Atom(token)
    if token in AROMATIC_SYMBOLS:
        return Atom(AROMATIC_SYMBOLS[token], aromatic=True)
    return None


def parse(smiles: str) -> MolecularGraph:
    """Parse SMILES into a graph; atoms are numbered in order of appearance."""
    tokens = tokenize(smiles)
    atoms: list[Atom] = []
    bonds: dict[frozenset, Bond] = {}
    branch_stack: list[int] = []
    # ring digit -> (atom index, bond symbol order or None)
    open_rings: dict[str, tuple[int, str | None]] = {}
    prev: int | None = None
    pending: str | None = None

    def add_bond(a, b, order):
        if a == b:
            raise SmilesError(f"atom {a} bonded to itself in {smiles!r}")
        key = frozenset((a, b))
        if key in bonds:
            raise SmilesError(f"duplicate bond between atoms {a} and {b} in {smiles!r}")
        if order is None:
            order = AROMATIC if atoms[a].aromatic and atoms[b].aromatic else SINGLE
        bonds[key] = Bond(min(a, b), max(a, b), order)

    for tok in tokens:
        atom = _atom_from_token(tok)
        if atom is not None:
            atoms.append(atom)
            idx = len(atoms) - 1
            if prev is not None:
                add_bond(prev, idx, pending)
            elif pending is not None:
                raise SmilesError(f"bond symbol with no preceding atom in {smiles!r}")
            prev, pending = idx, None
        elif tok in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesError(f"two consecutive bond symbols in {smiles!r}")
            pending = _BOND_SYMBOLS[tok]
        elif tok == "(":
            if prev is None:
                raise UnbalancedParentheses(f"branch opened with no atom in {smiles!r}")
            branch_stack.append(prev)
        elif tok == ")":
            if not branch_stack:
                raise UnbalancedParentheses(f"unmatched ')' in {smiles!r}")
            if pending is not None:
                raise SmilesError(f"dangling bond symbol before ')' in {smiles!r}")
            prev = branch_stack.pop()
        elif tok.isdigit() or tok.startswith("%"):
            digit = tok.lstrip("%")
            if prev is None:
                raise SmilesError(f"ring bond {digit} with no atom in {smiles!r}")
            if digit in open_rings:
                other, order = open_rings.pop(digit)
                if order is not None and pending is not None and order != pending:
                    raise SmilesError(f"conflicting ring bond {digit} in {smiles!r}")
                add_bond(other, prev, pending if pending is not None else order)
            else:
                open_rings[digit] = (prev, pending)
            pending = None
        elif tok == ".":
            if pending is not None:
                raise SmilesError(f"bond symbol before '.' in {smiles!r}")
            if branch_stack:
                raise UnbalancedParentheses(f"'.' inside a branch in {smiles!r}")
            prev = None
        elif tok == "*":
            raise UnknownAtomSymbol(f"wildcard atom '*' is not supported: {smiles!r}")
        else:
            raise UnknownAtomSymbol(f"unsupported token {tok!r} in {smiles!r}")

    if branch_stack:
        raise UnbalancedParentheses(f"unclosed '(' in {smiles!r}")
    if open_rings:
        raise UnclosedRingBond(min(open_rings))
    if pending is not None:
        raise SmilesError(f"trailing bond symbol in {smiles!r}")
    if not atoms:
        raise SmilesError(f"no atoms in {smiles!r}")
    ordered = sorted(bonds.values(), key=lambda b: (b.a, b.b))
    return MolecularGraph(tuple(atoms), tuple(ordered))


def graph_distance(g: MolecularGraph, a: int, b: int) -> float:
    """Shortest bond-path length between two atoms (``math.inf`` if disconnected)."""
    n = g.num_atoms
    for i in (a, b):
        if not 0 <= i < n:
            raise IndexOutOfRange(f"atom index {i} outside [0, {n})")
    return all_distances_from(g, a)[b]


def all_distances_from(g: MolecularGraph, source: int) -> list[float]:
    dist = [math.inf] * g.num_atoms
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v, _ in g.neighbors[u]:
            if dist[v] == math.inf:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist
