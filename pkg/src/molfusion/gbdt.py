"""Second-order gradient-boosted trees for binary classification.

Trees are grown level by level with exact greedy split search over
pre-sorted feature columns. A split sends ``x <= threshold`` to the left
child; NaN features follow the learned ``missing_left`` direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit
from scipy.special import expit

from molfusion.errors import DimensionMismatch, EmptyMatrix, SingleClassTraining


@dataclass
class GbdtConfig:
    num_rounds: int = 100
    max_depth: int = 6
    learning_rate: float = 0.3
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    base_score: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.num_rounds) < 1:
            raise ValueError("num_rounds must be positive")
        if int(self.max_depth) < 1:
            raise ValueError("max_depth must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        for name in ("reg_lambda", "gamma", "min_child_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("subsample", "colsample"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not math.isfinite(self.base_score):
            raise ValueError("base_score must be finite")
        self.num_rounds = int(self.num_rounds)
        self.max_depth = int(self.max_depth)
        self.seed = int(self.seed)


# --- loss pieces --------------------------------------------------------------

def logistic_grad_hess(logit, label):
    """Gradient and Hessian of the logistic loss with respect to the logit."""
    logit = np.asarray(logit, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    p = expit(logit)
    q = expit(-logit)  # 1 - p without cancellation
    g = np.where(label == 1, -q, np.where(label == 0, p, p - label))
    h = np.maximum(p * q, np.finfo(np.float64).tiny)
    if g.ndim == 0:
        return float(g), float(h)
    return g, h


def logistic_loss(logit, label):
    logit = np.asarray(logit, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    return label * np.logaddexp(0.0, -logit) + (1.0 - label) * np.logaddexp(0.0, logit)


def split_gain(GL, HL, GR, HR, reg_lambda, gamma):
    return 0.5 * (
        GL * GL / (HL + reg_lambda)
        + GR * GR / (HR + reg_lambda)
        - (GL + GR) ** 2 / (HL + HR + reg_lambda)
    ) - gamma


def leaf_weight(G, H, reg_lambda):
    return -G / (H + reg_lambda)


# --- split search kernels -----------------------------------------------------
#
# Each tree keeps, per candidate feature, the present rows of the current
# frontier grouped by node and sorted by value inside each group.
# Segment k of feature j is layout[j, bounds[j, k]:bounds[j, k + 1]]. Rows
# that reach a leaf leave the layout, so deep levels scan little.

@njit(cache=True)
def _initial_layout(sorted_idx, n_present, features, sampled):
    n_feat = features.shape[0]
    n = sorted_idx.shape[1]
    layout = np.empty((n_feat, n), dtype=np.int32)
    bounds = np.zeros((n_feat, 2), dtype=np.int64)
    for j in range(n_feat):
        f = features[j]
        c = 0
        for i in range(n_present[f]):
            r = sorted_idx[f, i]
            layout[j, c] = r
            c += sampled[r]
        bounds[j, 1] = c
    return layout, bounds


@njit(cache=True)
def _find_level_splits(layout, bounds, features, XT, has_missing, g, h,
                       node_G, node_H, node_N, lam, gamma, mcw):
    # A candidate's score is GL^2/(HL+lam) + GR^2/(HR+lam) = num/den. It is
    # kept as a fraction and compared by cross-multiplying, so the sweep
    # needs no division. The starting best is the zero-gain score.
    n_nodes = node_G.shape[0]
    best_num = np.empty(n_nodes)
    best_den = np.ones(n_nodes)
    best_feat = np.full(n_nodes, -1, dtype=np.int64)
    best_thr = np.zeros(n_nodes)
    best_mleft = np.zeros(n_nodes, dtype=np.bool_)
    parent = np.empty(n_nodes)
    for k in range(n_nodes):
        parent[k] = node_G[k] * node_G[k] / (node_H[k] + lam)
        best_num[k] = parent[k] + 2.0 * gamma
    for j in range(features.shape[0]):
        f = features[j]
        x = XT[f]
        idx = layout[j]
        missing = has_missing[f]
        for k in range(n_nodes):
            lo = bounds[j, k]
            hi = bounds[j, k + 1]
            if hi == lo:
                continue
            NG = node_G[k]
            NH = node_H[k]
            bnum = best_num[k]
            bden = best_den[k]
            bt = -1
            thr = 0.0
            bm = True
            GL = 0.0
            HL = 0.0
            last = x[idx[lo]]
            # a column with gaps elsewhere may still be dense inside this node
            if not missing or hi - lo == node_N[k]:
                for i in range(lo, hi):
                    r = idx[i]
                    v = x[r]
                    hr = NH - HL
                    a_ = HL + lam
                    b_ = hr + lam
                    gr = NG - GL
                    num = GL * GL * b_ + gr * gr * a_
                    den = a_ * b_
                    if (v != last) & (HL >= mcw) & (hr >= mcw) & (num * bden > bnum * den):
                        bnum = num
                        bden = den
                        bt = i
                        thr = last
                    GL += g[r]
                    HL += h[r]
                    last = v
            else:
                PG = 0.0
                PH = 0.0
                for i in range(lo, hi):
                    PG += g[idx[i]]
                    PH += h[idx[i]]
                MG = NG - PG
                MH = NH - PH
                for i in range(lo + 1, hi + 1):
                    # i == hi is the cut after the last present row
                    r = idx[i - 1]
                    GL += g[r]
                    HL += h[r]
                    last = x[r]
                    if i < hi and x[idx[i]] == last:
                        continue
                    # missing rows left first, so equal gains keep missing_left
                    for mleft in (True, False):
                        if i == hi and mleft:
                            continue
                        if i == hi and MH <= 0.0:
                            continue
                        gl = GL + MG if mleft else GL
                        hl = HL + MH if mleft else HL
                        gr = NG - gl
                        hr = NH - hl
                        if hl < mcw or hr < mcw:
                            continue
                        a_ = hl + lam
                        b_ = hr + lam
                        num = gl * gl * b_ + gr * gr * a_
                        den = a_ * b_
                        if num * bden > bnum * den:
                            bnum = num
                            bden = den
                            bt = i
                            thr = last
                            bm = mleft
            if bt >= 0:
                best_num[k] = bnum
                best_den[k] = bden
                best_feat[k] = f
                best_thr[k] = thr
                best_mleft[k] = bm
    best_gain = 0.5 * (best_num / best_den - parent) - gamma
    best_gain[best_feat < 0] = 0.0
    return best_gain, best_feat, best_thr, best_mleft


@njit(cache=True)
def _partition(layout, bounds, go_right, split, node_N, node_right):
    """Move each split node's rows into its two children, keeping value order.

    Children are laid out parent by parent, left before right; rows of nodes
    that did not split leave the layout.
    """
    n_feat, n = layout.shape
    n_nodes = split.shape[0]
    n_children = 2 * split.sum()
    out = np.empty((n_feat, n), dtype=np.int32)
    new_bounds = np.zeros((n_feat, n_children + 1), dtype=np.int64)
    for j in range(n_feat):
        src = layout[j]
        dst = out[j]
        c = 0
        pos = 0
        for k in range(n_nodes):
            if not split[k]:
                continue
            lo = bounds[j, k]
            hi = bounds[j, k + 1]
            n_right = node_right[k]
            if hi - lo != node_N[k]:
                n_right = 0
                for i in range(lo, hi):
                    n_right += go_right[src[i]]
            lc = pos
            rc = pos + (hi - lo) - n_right
            new_bounds[j, c + 1] = rc
            for i in range(lo, hi):
                r = src[i]
                side = go_right[r]
                dst[rc if side else lc] = r
                lc += 1 - side
                rc += side
            pos += hi - lo
            new_bounds[j, c + 2] = pos
            c += 2
    return out, new_bounds


# --- model ---------------------------------------------------------------------

@dataclass
class Tree:
    feature: np.ndarray      # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    missing_left: np.ndarray
    value: np.ndarray        # learning-rate-scaled leaf output
    depth: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            x = X[rows, np.where(internal, f, 0)]
            go_left = np.where(np.isnan(x), self.missing_left[node], x <= self.threshold[node])
            child = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, child, node)
        return self.value[node]

    def to_dict(self, i: int = 0) -> dict:
        if self.feature[i] < 0:
            return {"leaf": float(self.value[i])}
        return {
            "feature": int(self.feature[i]),
            "threshold": float(self.threshold[i]),
            "missing_left": bool(self.missing_left[i]),
            "left": self.to_dict(int(self.left[i])),
            "right": self.to_dict(int(self.right[i])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feature, threshold, left, right, mleft, value = [], [], [], [], [], []
        depth = 0

        def visit(node, level):
            nonlocal depth
            depth = max(depth, level)
            i = len(feature)
            for arr in (feature, threshold, left, right, mleft, value):
                arr.append(0)
            if "leaf" in node:
                feature[i] = -1
                value[i] = float(node["leaf"])
                left[i] = right[i] = -1
                return i
            feature[i] = int(node["feature"])
            threshold[i] = float(node["threshold"])
            mleft[i] = bool(node["missing_left"])
            left[i] = visit(node["left"], level + 1)
            right[i] = visit(node["right"], level + 1)
            return i

        visit(d, 0)
        return cls(
            np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(mleft, dtype=bool), np.array(value, dtype=np.float64), depth,
        )


@dataclass
class GbdtModel:
    trees: list[Tree]
    base_score: float
    feature_count: int
    config: GbdtConfig = field(default_factory=GbdtConfig)

    def to_json(self) -> str:
        payload = {
            "header": {
                "config": asdict(self.config),
                "base_score": self.base_score,
                "feature_count": self.feature_count,
                "num_trees": len(self.trees),
            },
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        payload = json.loads(text)
        head = payload["header"]
        return cls(
            [Tree.from_dict(t) for t in payload["trees"]],
            float(head["base_score"]),
            int(head["feature_count"]),
            GbdtConfig(**head["config"]),
        )


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _grow_tree(X, XT, sorted_idx, n_present, has_missing, features,
               sampled, g, h, cfg: GbdtConfig) -> tuple[Tree, np.ndarray]:
    """Grow one tree; returns it with the scaled output for every row of X."""
    lam, gamma, mcw = cfg.reg_lambda, cfg.gamma, cfg.min_child_weight
    n = X.shape[0]
    gs = np.where(sampled, g, 0.0)
    hs = np.where(sampled, h, 0.0)

    feature, threshold, left, right, mleft = [-1], [0.0], [-1], [-1], [False]
    node_G, node_H, node_N = [gs.sum()], [hs.sum()], [int(sampled.sum())]
    pos = np.zeros(n, dtype=np.int64)
    layout, bounds = _initial_layout(sorted_idx, n_present, features, sampled)
    frontier = [0]
    depth = 0
    rows = np.arange(n)
    for _ in range(cfg.max_depth):
        fG = np.array([node_G[k] for k in frontier])
        fH = np.array([node_H[k] for k in frontier])
        fN = np.array([node_N[k] for k in frontier], dtype=np.int64)
        _, bfeat, bthr, bml = _find_level_splits(
            layout, bounds, features, XT, has_missing, g, h, fG, fH, fN, lam, gamma, mcw,
        )
        frontier_before = frontier
        split_nodes = [(k, ci) for ci, k in enumerate(frontier) if bfeat[ci] >= 0]
        if not split_nodes:
            break
        depth += 1
        new_frontier = []
        for k, ci in split_nodes:
            feature[k] = int(bfeat[ci])
            threshold[k] = float(bthr[ci])
            mleft[k] = bool(bml[ci])
            for side in (left, right):
                side[k] = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                mleft.append(False)
                node_G.append(0.0)
                node_H.append(0.0)
                node_N.append(0)
            new_frontier += [left[k], right[k]]

        f = np.array(feature)[pos]
        moving = f >= 0
        x = X[rows, np.where(moving, f, 0)]
        go_left = np.where(np.isnan(x), np.array(mleft)[pos], x <= np.array(threshold)[pos])
        child = np.where(go_left, np.array(left)[pos], np.array(right)[pos])
        pos = np.where(moving, child, pos)

        n_nodes = len(feature)
        G = np.bincount(pos, weights=gs, minlength=n_nodes)
        H = np.bincount(pos, weights=hs, minlength=n_nodes)
        N = np.bincount(pos[sampled], minlength=n_nodes)
        for c in new_frontier:
            node_G[c] = G[c]
            node_H[c] = H[c]
            node_N[c] = int(N[c])
        frontier = new_frontier
        if depth < cfg.max_depth:
            go_right = (~go_left).astype(np.int64)
            node_right = np.array([N[right[k]] if right[k] >= 0 else 0 for k in frontier_before], dtype=np.int64)
            layout, bounds = _partition(layout, bounds, go_right, bfeat >= 0, fN, node_right)

    value = np.zeros(len(feature))
    for k in range(len(feature)):
        if feature[k] < 0:
            value[k] = cfg.learning_rate * leaf_weight(node_G[k], node_H[k], lam)
    tree = Tree(
        np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
        np.array(mleft, dtype=bool), value, depth,
    )
    return tree, value[pos]


def train(X, y, cfg: GbdtConfig | None = None) -> tuple[GbdtModel, list[float]]:
    """Fit a boosted-tree classifier; NaN labels mark rows to leave out.

    Returns the model and the training log-loss after every round.
    """
    cfg = cfg or GbdtConfig()
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} feature rows vs {y.shape[0]} labels")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyMatrix(f"cannot train on a {X.shape} matrix")
    keep = ~np.isnan(y)
    X, y = X[keep], y[keep]
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0, 1 or NaN")
    if y.size == 0 or y.min() == y.max():
        raise SingleClassTraining("training labels contain a single class")

    n, d = X.shape
    # NaN sorts last, so the first n_present entries of a column are its present rows
    sorted_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T.astype(np.int32))
    XT = np.ascontiguousarray(X.T)
    n_present = (~np.isnan(X)).sum(axis=0).astype(np.int64)
    has_missing = n_present < n

    rng = np.random.default_rng(cfg.seed)
    n_sub = max(1, int(round(cfg.subsample * n)))
    n_col = max(1, int(round(cfg.colsample * d)))
    logits = np.full(n, cfg.base_score)
    trees, losses = [], []
    for _ in range(cfg.num_rounds):
        g, h = logistic_grad_hess(logits, y)
        if n_sub < n:
            sampled = np.zeros(n, dtype=bool)
            sampled[rng.choice(n, n_sub, replace=False)] = True
        else:
            sampled = np.ones(n, dtype=bool)
        if n_col < d:
            features = np.sort(rng.choice(d, n_col, replace=False)).astype(np.int64)
        else:
            features = np.arange(d, dtype=np.int64)
        tree, out = _grow_tree(
            X, XT, sorted_idx, n_present, has_missing, features,
            sampled, g, h, cfg,
        )
        trees.append(tree)
        logits = logits + out
        losses.append(float(logistic_loss(logits, y).mean()))
    return GbdtModel(trees, cfg.base_score, d, cfg), losses


def predict_logit(m: GbdtModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != m.feature_count:
        raise DimensionMismatch(f"model expects {m.feature_count} features, got {X.shape[1]}")
    out = np.full(X.shape[0], m.base_score)
    for tree in m.trees:
        out += tree.apply(X)
    return out


def predict(m: GbdtModel, X) -> np.ndarray:
    """Positive-class probabilities."""
    return expit(predict_logit(m, X))
