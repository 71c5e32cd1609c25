"""Latent-space fusion: plain concatenation of the graph and sequence views."""

import numpy as np

from molfusion.errors import DimensionMismatch, RowCountMismatch
from molfusion.gnn_encoder import GRAPH_DIM
from molfusion.seq_encoder import SEQ_DIM

FUSED_DIM = GRAPH_DIM + SEQ_DIM


def fuse(g, s) -> np.ndarray:
    g = np.asarray(g)
    s = np.asarray(s)
    if g.shape != (GRAPH_DIM,):
        raise DimensionMismatch(f"graph embedding must have {GRAPH_DIM} values, got {g.shape}")
    if s.shape != (SEQ_DIM,):
        raise DimensionMismatch(f"sequence embedding must have {SEQ_DIM} values, got {s.shape}")
    return np.concatenate([g, s])


def fuse_batch(G, S) -> np.ndarray:
    G = np.asarray(G)
    S = np.asarray(S)
    if G.ndim != 2 or S.ndim != 2:
        raise DimensionMismatch("fuse_batch expects two matrices")
    if G.shape[0] != S.shape[0]:
        raise RowCountMismatch(f"{G.shape[0]} graph rows vs {S.shape[0]} sequence rows")
    if G.shape[1] != GRAPH_DIM or S.shape[1] != SEQ_DIM:
        raise DimensionMismatch(
            f"expected widths ({GRAPH_DIM}, {SEQ_DIM}), got ({G.shape[1]}, {S.shape[1]})"
        )
    return np.hstack([G, S])
