"""File formats: MoleculeNet-style CSV, embedding cache, weight bundles.

Embedding cache (little-endian)::

    b"MVEC" | version u32 (=1) | rows u64 | dim u32 | view_tag u8 | rows*dim float32

Weight bundle (little-endian)::

    b"MWTS" | version u32 (=1) | count u32 |
    per tensor: name_len u16 | utf-8 name | rank u8 | dims u32[rank] | float32 payload
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from molfusion.errors import (
    BadMagic,
    DimensionHeaderMismatch,
    MalformedCsv,
    MissingColumn,
    NonBinaryLabel,
    NonFiniteEmbedding,
    RowCountMismatch,
    TruncatedFile,
    VersionMismatch,
)

CACHE_MAGIC = b"MVEC"
BUNDLE_MAGIC = b"MWTS"
FORMAT_VERSION = 1
VIEW_TAGS = {"graph": 0, "seq": 1, "fused": 2, "external": 3}
_TAG_NAMES = {v: k for k, v in VIEW_TAGS.items()}
NATIVE_WIDTHS = {"graph": 1024, "seq": 768, "fused": 1792}
_CACHE_HEADER = struct.Struct("<4sIQIB")

_LABEL_VALUES = {"0": 0.0, "1": 1.0, "0.0": 0.0, "1.0": 1.0}


@dataclass
class Dataset:
    smiles: list[str]
    task_names: list[str]
    labels: np.ndarray  # rows x tasks, NaN = missing

    def __len__(self):
        return len(self.smiles)

    def subset(self, rows) -> "Dataset":
        rows = list(rows)
        return Dataset([self.smiles[i] for i in rows], list(self.task_names), self.labels[rows])


@dataclass
class EmbeddingMatrix:
    values: np.ndarray
    view_tag: str

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype="<f4")
        if self.values.ndim != 2:
            raise ValueError("embedding matrix must be two-dimensional")
        if self.view_tag not in VIEW_TAGS:
            raise ValueError(f"unknown view tag {self.view_tag!r}")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingMatrix)
            and self.view_tag == other.view_tag
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


def load_dataset(path, smiles_col: str = "smiles", task_cols=None) -> Dataset:
    """Read a header-row CSV with one SMILES column and 0/1/blank task columns.

    ``task_cols=None`` takes every column other than the SMILES column.
    """
    with open(path, newline="") as fh:
        try:
            rows = list(csv.reader(fh))
        except csv.Error as exc:
            raise MalformedCsv(f"{path}: {exc}") from exc
    if not rows:
        raise MalformedCsv(f"{path}: no header row")
    header = [h.strip() for h in rows[0]]
    if smiles_col not in header:
        raise MissingColumn(f"column {smiles_col!r} not in {header}")
    if task_cols is None:
        task_cols = [h for h in header if h != smiles_col]
    task_cols = list(task_cols)
    if not task_cols:
        raise MissingColumn("no task columns")
    for col in task_cols:
        if col not in header:
            raise MissingColumn(f"column {col!r} not in {header}")
    s_idx = header.index(smiles_col)
    t_idx = [header.index(c) for c in task_cols]

    smiles, labels = [], []
    for r, row in enumerate(rows[1:]):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedCsv(f"{path}: data row {r} has {len(row)} fields, header has {len(header)}")
        smiles.append(row[s_idx].strip())
        out = []
        for col, j in zip(task_cols, t_idx):
            cell = row[j].strip()
            if cell == "":
                out.append(math.nan)
            elif cell in _LABEL_VALUES:
                out.append(_LABEL_VALUES[cell])
            else:
                raise NonBinaryLabel(r, col, cell)
        labels.append(out)
    return Dataset(smiles, task_cols, np.array(labels, dtype=np.float64).reshape(len(smiles), len(task_cols)))


# --- embedding cache ----------------------------------------------------------

def write_cache(m: EmbeddingMatrix, path) -> None:
    if not np.isfinite(m.values).all():
        r, c = np.argwhere(~np.isfinite(m.values))[0]
        raise NonFiniteEmbedding(int(r), int(c))
    header = _CACHE_HEADER.pack(CACHE_MAGIC, FORMAT_VERSION, m.rows, m.dim, VIEW_TAGS[m.view_tag])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(m.values.tobytes(order="C"))


def read_cache(path) -> EmbeddingMatrix:
    data = Path(path).read_bytes()
    if data[:4] != CACHE_MAGIC:
        raise BadMagic(f"{path}: not an embedding cache (magic {data[:4]!r})")
    if len(data) < _CACHE_HEADER.size:
        raise TruncatedFile(f"{path}: header is incomplete")
    _, version, rows, dim, tag = _CACHE_HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: version {version}, expected {FORMAT_VERSION}")
    if tag not in _TAG_NAMES:
        raise DimensionHeaderMismatch(f"{path}: unknown view tag {tag}")
    view = _TAG_NAMES[tag]
    if view in NATIVE_WIDTHS and dim != NATIVE_WIDTHS[view]:
        raise DimensionHeaderMismatch(f"{path}: {view} view must be {NATIVE_WIDTHS[view]} wide, header says {dim}")
    payload = data[_CACHE_HEADER.size:]
    expected = rows * dim * 4
    if len(payload) < expected:
        raise TruncatedFile(f"{path}: header promises {rows}x{dim} values, payload holds {len(payload) // 4}")
    if len(payload) > expected:
        raise DimensionHeaderMismatch(f"{path}: {len(payload) - expected} bytes beyond the {rows}x{dim} payload")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
    return EmbeddingMatrix(values.copy(), view)


def import_embeddings(path, expected_rows: int) -> EmbeddingMatrix:
    """Load externally computed embeddings (a cache file or a numeric CSV)."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == CACHE_MAGIC:
        values = read_cache(path).values
    else:
        values = _read_numeric_csv(path)
    if values.shape[0] != expected_rows:
        raise RowCountMismatch(f"{path}: {values.shape[0]} rows, dataset has {expected_rows}")
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        raise NonFiniteEmbedding(int(bad[0][0]), int(bad[0][1]))
    return EmbeddingMatrix(values, "external")


def _read_numeric_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        return np.zeros((0, 0))

    def numeric(row):
        try:
            [float(x) for x in row]
            return True
        except ValueError:
            return False

    if not numeric(rows[0]):
        rows = rows[1:]  # header
    width = len(rows[0]) if rows else 0
    out = np.empty((len(rows), width), dtype=np.float64)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise MalformedCsv(f"{path}: row {r} has {len(row)} values, expected {width}")
        for c, cell in enumerate(row):
            try:
                out[r, c] = float(cell) if cell.strip() else math.nan
            except ValueError:
                raise MalformedCsv(f"{path}: row {r}, column {c}: {cell!r} is not a number") from None
    return out


# --- weight bundles -----------------------------------------------------------

def write_bundle(tensors: dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(BUNDLE_MAGIC + struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def read_bundle(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != BUNDLE_MAGIC:
        raise BadMagic(f"{path}: not a weight bundle")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"{path}: version {version}, expected {FORMAT_VERSION}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            name = data[pos + 2:pos + 2 + n].decode("utf-8")
            pos += 2 + n
            (rank,) = struct.unpack_from("<B", data, pos)
            dims = struct.unpack_from(f"<{rank}I", data, pos + 1)
            pos += 1 + 4 * rank
            size = int(np.prod(dims, dtype=np.int64)) * 4
            if pos + size > len(data):
                raise TruncatedFile(f"{path}: tensor {name!r} runs past the end of the file")
            out[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(dims).copy()
            pos += size
    except struct.error as exc:
        raise TruncatedFile(f"{path}: {exc}") from exc
    return out
