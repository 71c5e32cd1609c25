import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molfusion.errors import DimensionMismatch, EmptyMatrix, SingleClassTraining
from molfusion.gbdt import (
    GbdtConfig,
    GbdtModel,
    leaf_weight,
    logistic_grad_hess,
    logistic_loss,
    predict,
    predict_logit,
    split_gain,
    train,
)
from molfusion.metrics import roc_auc

# --- reference implementation --------------------------------------------------


def ref_tree(X, g, h, depth, lam, gamma, mcw, lr):
    """Depth-first exact greedy tree in plain Python, with the same tie order."""
    rows = list(range(X.shape[0]))

    def grow(rows, level):
        G = sum(g[r] for r in rows)
        H = sum(h[r] for r in rows)
        if level == depth:
            return {"leaf": lr * leaf_weight(G, H, lam)}
        best = None
        for f in range(X.shape[1]):
            present = sorted((r for r in rows if not math.isnan(X[r, f])), key=lambda r: X[r, f])
            missing = [r for r in rows if math.isnan(X[r, f])]
            values = sorted({X[r, f] for r in present})
            for thr in values:
                left = [r for r in present if X[r, f] <= thr]
                right = [r for r in present if X[r, f] > thr]
                for mleft in (True, False):
                    if not missing and not mleft:
                        continue
                    L = left + missing if mleft else left
                    R = right if mleft else right + missing
                    if not L or not R:
                        continue
                    gl, hl = sum(g[r] for r in L), sum(h[r] for r in L)
                    gr, hr = sum(g[r] for r in R), sum(h[r] for r in R)
                    if hl < mcw or hr < mcw:
                        continue
                    gain = split_gain(gl, hl, gr, hr, lam, gamma)
                    if gain > 1e-9 and (best is None or gain > best[0] + 1e-9):
                        best = (gain, f, thr, mleft, L, R)
        if best is None:
            return {"leaf": lr * leaf_weight(G, H, lam)}
        _, f, thr, mleft, L, R = best
        return {"feature": f, "threshold": thr, "missing_left": mleft,
                "left": grow(L, level + 1), "right": grow(R, level + 1)}

    return grow(rows, 0)


def assert_tree_close(a, b):
    if "leaf" in a or "leaf" in b:
        assert "leaf" in a and "leaf" in b, (a, b)
        assert math.isclose(a["leaf"], b["leaf"], rel_tol=1e-9, abs_tol=1e-12)
        return
    assert (a["feature"], a["threshold"], a["missing_left"]) == (b["feature"], b["threshold"], b["missing_left"])
    assert_tree_close(a["left"], b["left"])
    assert_tree_close(a["right"], b["right"])


# --- loss pieces ----------------------------------------------------------------


@pytest.mark.parametrize("label", [0.0, 1.0])
@pytest.mark.parametrize("logit", [-30.0, -3.0, -0.2, 0.0, 0.7, 4.0, 25.0])
def test_grad_hess_finite_differences(logit, label):
    g, h = logistic_grad_hess(logit, label)
    eps = 1e-5
    fd_g = (logistic_loss(logit + eps, label) - logistic_loss(logit - eps, label)) / (2 * eps)
    fd_h = (logistic_grad_hess(logit + eps, label)[0] - logistic_grad_hess(logit - eps, label)[0]) / (2 * eps)
    assert math.isclose(g, fd_g, rel_tol=1e-6, abs_tol=1e-9)
    assert math.isclose(h, fd_h, rel_tol=1e-5, abs_tol=1e-9)


def test_grad_hess_at_zero():
    assert logistic_grad_hess(0.0, 1.0) == (-0.5, 0.25)
    assert logistic_grad_hess(0.0, 0.0) == (0.5, 0.25)


def test_hessian_stays_positive():
    _, h = logistic_grad_hess(np.array([-800.0, 800.0]), np.array([0.0, 1.0]))
    assert (h > 0).all()


def test_split_gain_and_leaf_weight():
    # G = 2, H = 4, lambda 1: weight -0.4
    assert leaf_weight(2.0, 4.0, 1.0) == -0.4
    # symmetric split of opposite gradients
    gain = split_gain(1.0, 1.0, -1.0, 1.0, 0.0, 0.0)
    assert gain == 1.0
    assert split_gain(1.0, 1.0, -1.0, 1.0, 0.0, 0.25) == 0.75


# --- trees against the reference -------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("with_missing", [False, True])
def test_first_tree_matches_reference(seed, with_missing):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 4))
    X[:, 2] = np.round(X[:, 2])  # repeated values
    if with_missing:
        X[rng.random(X.shape) < 0.15] = np.nan
    y = (np.nan_to_num(X[:, 0]) + 0.5 * np.nan_to_num(X[:, 1]) + rng.normal(size=40) > 0).astype(float)
    cfg = GbdtConfig(num_rounds=1, max_depth=3, learning_rate=0.5, reg_lambda=0.7, min_child_weight=0.5)
    model, _ = train(X, y, cfg)
    g, h = logistic_grad_hess(np.zeros(40), y)
    ref = ref_tree(X, g, h, 3, 0.7, 0.0, 0.5, 0.5)
    assert_tree_close(model.trees[0].to_dict(), ref)


def test_tie_prefers_lowest_feature():
    rng = np.random.default_rng(3)
    x = rng.normal(size=30)
    y = (x > 0.1).astype(float)
    X = np.column_stack([rng.normal(size=30), x, x])
    model, _ = train(X, y, GbdtConfig(num_rounds=1, max_depth=1))
    assert model.trees[0].feature[0] == 1


def test_tie_prefers_lowest_threshold():
    X = np.array([[1.0], [2.0], [3.0], [4.0]])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    model, _ = train(X, y, GbdtConfig(num_rounds=1, max_depth=1, min_child_weight=0.0))
    assert model.trees[0].threshold[0] == 1.0


def test_missing_direction_learned():
    rng = np.random.default_rng(0)
    n = 200
    x = rng.normal(size=n)
    y = (x > 0).astype(float)
    x[(y == 1) & (rng.random(n) < 0.5)] = np.nan  # missing rows are all positives
    model, _ = train(x[:, None], y, GbdtConfig(num_rounds=1, max_depth=1))
    t = model.trees[0]
    assert t.feature[0] == 0
    # positives sit right of the threshold, so missing rows should follow them
    assert not t.missing_left[0]
    assert predict(model, np.array([[np.nan]]))[0] > 0.5


def test_nan_labels_are_excluded():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3))
    y = (X[:, 0] > 0).astype(float)
    y_nan = y.copy()
    y_nan[::7] = np.nan
    keep = ~np.isnan(y_nan)
    a, _ = train(X, y_nan, GbdtConfig(num_rounds=5))
    b, _ = train(X[keep], y[keep], GbdtConfig(num_rounds=5))
    assert a.to_json() == b.to_json()


# --- training behaviour -----------------------------------------------------------


def test_loss_non_increasing_and_separable():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 20))
    y = (rng.random(500) < 0.5).astype(float)
    _, losses = train(X, y, GbdtConfig(num_rounds=100))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    y_sep = (X[:, 3] > 0.2).astype(float)
    model, _ = train(X, y_sep, GbdtConfig(num_rounds=20))
    assert roc_auc(predict(model, X), y_sep) == 1.0


@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_monotone_feature_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 3))
    y = (X[:, 0] * X[:, 1] + rng.normal(size=50) > 0).astype(float)
    if y.min() == y.max():
        return
    Z = np.exp(X) * 2.0 + 1.0
    cfg = GbdtConfig(num_rounds=5, max_depth=3)
    a, la = train(X, y, cfg)
    b, lb = train(Z, y, cfg)
    assert la == lb
    assert np.array_equal(predict_logit(a, X), predict_logit(b, Z))
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)


def test_seeded_subsampling_deterministic():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(120, 10))
    y = (X[:, 0] > 0).astype(float)
    cfg = GbdtConfig(num_rounds=10, subsample=0.6, colsample=0.5, seed=11)
    assert train(X, y, cfg)[0].to_json() == train(X, y, cfg)[0].to_json()
    other = GbdtConfig(num_rounds=10, subsample=0.6, colsample=0.5, seed=12)
    assert train(X, y, cfg)[0].to_json() != train(X, y, other)[0].to_json()


def test_zero_trees_predict_half():
    m = GbdtModel([], 0.0, 3)
    assert np.array_equal(predict(m, np.zeros((4, 3))), np.full(4, 0.5))


def test_json_round_trip():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(80, 5))
    X[rng.random(X.shape) < 0.1] = np.nan
    y = (np.nan_to_num(X[:, 1]) > 0).astype(float)
    model, _ = train(X, y, GbdtConfig(num_rounds=8, max_depth=4, seed=3))
    text = model.to_json()
    again = GbdtModel.from_json(text)
    assert again.to_json() == text
    assert np.array_equal(predict(again, X), predict(model, X))
    payload = json.loads(text)
    assert payload["header"]["config"]["max_depth"] == 4
    assert set(payload["trees"][0]) <= {"feature", "threshold", "missing_left", "left", "right", "leaf"}


def test_errors():
    with pytest.raises(SingleClassTraining):
        train(np.zeros((5, 2)), np.ones(5))
    with pytest.raises(EmptyMatrix):
        train(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(DimensionMismatch):
        train(np.zeros((5, 2)), np.zeros(4))
    model, _ = train(np.arange(10.0)[:, None], (np.arange(10) > 4).astype(float), GbdtConfig(num_rounds=2))
    with pytest.raises(DimensionMismatch):
        predict(model, np.zeros((3, 2)))
    with pytest.raises(ValueError):
        GbdtConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        GbdtConfig(subsample=1.5)
