"""Graph Isomorphism Network encoder with bond features (graph view, 1024-d).

Layer update for node v at iteration k (K = 3 iterations):

    h_v^k = MLP_k((1 + eps_k) * h_v^{k-1} + sum_{u in N(v)} relu(h_u^{k-1} + e_uv))

followed by mean pooling over atoms and an affine projection to 1024 values.
Weights are frozen once created or imported; nothing here trains them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from molfusion.errors import EmptyGraph, StageError
from molfusion.smiles import BOND_ORDERS, ELEMENTS, MolecularGraph

GRAPH_DIM = 1024
NUM_LAYERS = 3
CHARGE_BUCKETS = (-2, -1, 0, 1, 2)
DEFAULT_HIDDEN = 64

_ELEMENT_INDEX = {e: i for i, e in enumerate(ELEMENTS)}
_BOND_INDEX = {b: i for i, b in enumerate(BOND_ORDERS)}


@dataclass(frozen=True)
class GinLayer:
    eps: float
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def mlp(self, z: np.ndarray) -> np.ndarray:
        return np.maximum(z @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2


@dataclass(frozen=True)
class GinParams:
    atom_embed: np.ndarray   # (elements, 2 aromatic flags, 5 charge buckets, d_h)
    bond_embed: np.ndarray   # (4 bond orders, d_h)
    layers: tuple[GinLayer, ...]
    readout_w: np.ndarray    # (d_h, 1024)
    readout_b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.bond_embed.shape[1]

    def to_bundle(self) -> dict[str, np.ndarray]:
        out = {"atom_embed": self.atom_embed, "bond_embed": self.bond_embed}
        for k, layer in enumerate(self.layers):
            out[f"layer{k}.eps"] = np.array([layer.eps])
            out[f"layer{k}.w1"] = layer.w1
            out[f"layer{k}.b1"] = layer.b1
            out[f"layer{k}.w2"] = layer.w2
            out[f"layer{k}.b2"] = layer.b2
        out["readout.w"] = self.readout_w
        out["readout.b"] = self.readout_b
        return out

    @classmethod
    def from_bundle(cls, tensors: dict[str, np.ndarray]) -> "GinParams":
        f64 = {k: np.asarray(v, dtype=np.float64) for k, v in tensors.items()}
        layers = tuple(
            GinLayer(
                float(f64[f"layer{k}.eps"].ravel()[0]),
                f64[f"layer{k}.w1"], f64[f"layer{k}.b1"],
                f64[f"layer{k}.w2"], f64[f"layer{k}.b2"],
            )
            for k in range(NUM_LAYERS)
        )
        params = cls(f64["atom_embed"], f64["bond_embed"], layers,
                     f64["readout.w"], f64["readout.b"])
        if params.readout_w.shape[1] != GRAPH_DIM:
            raise ValueError(f"readout width must be {GRAPH_DIM}")
        return params


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


def init_gin(seed: int = 0, d_h: int = DEFAULT_HIDDEN) -> GinParams:
    """Seeded Glorot-uniform initialization; eps and biases start at zero."""
    if d_h < 1:
        raise ValueError("hidden width d_h must be at least 1")
    rng = np.random.default_rng(seed)
    n_rows = len(ELEMENTS) * 2 * len(CHARGE_BUCKETS)
    atom = _glorot(rng, n_rows, d_h).reshape(len(ELEMENTS), 2, len(CHARGE_BUCKETS), d_h)
    bond = _glorot(rng, len(BOND_ORDERS), d_h)
    layers = tuple(
        GinLayer(0.0, _glorot(rng, d_h, d_h), np.zeros(d_h), _glorot(rng, d_h, d_h), np.zeros(d_h))
        for _ in range(NUM_LAYERS)
    )
    readout_w = _glorot(rng, d_h, GRAPH_DIM)
    return GinParams(atom, bond, layers, readout_w, np.zeros(GRAPH_DIM))


def _charge_bucket(charge: int) -> int:
    return min(max(charge, -2), 2) + 2


def initial_states(p: GinParams, g: MolecularGraph) -> np.ndarray:
    idx = [(_ELEMENT_INDEX[a.element], int(a.aromatic), _charge_bucket(a.formal_charge))
           for a in g.atoms]
    e, ar, c = (np.array(x, dtype=np.int64) for x in zip(*idx))
    return p.atom_embed[e, ar, c]


def node_states(p: GinParams, g: MolecularGraph) -> list[np.ndarray]:
    """Node state matrices after 0, 1, ..., K message-passing iterations."""
    if g.num_atoms == 0:
        raise EmptyGraph("cannot encode a graph with no atoms")
    h = initial_states(p, g)
    states = [h]
    if g.bonds:
        a = np.array([b.a for b in g.bonds])
        b = np.array([b.b for b in g.bonds])
        src = np.concatenate([a, b])
        dst = np.concatenate([b, a])
        edge = p.bond_embed[np.array([_BOND_INDEX[x.order] for x in g.bonds] * 2)]
    for layer in p.layers:
        msg = np.zeros_like(h)
        if g.bonds:
            np.add.at(msg, dst, np.maximum(h[src] + edge, 0.0))
        h = layer.mlp((1.0 + layer.eps) * h + msg)
        states.append(h)
    return states


def encode_graph(p: GinParams, g: MolecularGraph) -> np.ndarray:
    h = node_states(p, g)[-1]
    return h.mean(axis=0) @ p.readout_w + p.readout_b


def encode_graph_batch(p: GinParams, graphs) -> np.ndarray:
    out = np.empty((len(graphs), GRAPH_DIM))
    for i, g in enumerate(graphs):
        try:
            out[i] = encode_graph(p, g)
        except Exception as exc:
            raise StageError("encode_graph", exc, row=i) from exc
    return out
