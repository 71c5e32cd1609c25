import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molfusion.errors import NoCompleteTrials
from molfusion.hpo import (
    SearchSpace,
    TaskData,
    run_study,
    sample_config,
    summarize,
    trial_seed,
    write_study_log,
)

SMALL = SearchSpace(num_rounds=(3, 8), max_depth=(2, 3))


def _data(seed=0, n=80, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = (X[:, 0] + 0.3 * rng.normal(size=n) > 0).astype(float)
    return TaskData(X[: n // 2], y[: n // 2], ["t"]), TaskData(X[n // 2:], y[n // 2:], ["t"])


def test_point_space_gives_that_config():
    space = SearchSpace(
        num_rounds=(7, 7), max_depth=(3, 3), learning_rate=(0.1, 0.1), reg_lambda=(2.0, 2.0),
        gamma=(0.5, 0.5), min_child_weight=(1.0, 1.0), subsample=(0.8, 0.8), colsample=(0.6, 0.6),
    )
    cfg = sample_config(space, np.random.default_rng(5))
    assert (cfg.num_rounds, cfg.max_depth, cfg.learning_rate, cfg.reg_lambda) == (7, 3, 0.1, 2.0)
    assert (cfg.gamma, cfg.min_child_weight, cfg.subsample, cfg.colsample) == (0.5, 1.0, 0.8, 0.6)


def test_same_state_same_config():
    a = sample_config(SearchSpace(), np.random.default_rng(9))
    b = sample_config(SearchSpace(), np.random.default_rng(9))
    assert a == b


def test_learning_rate_range():
    rng = np.random.default_rng(0)
    rates = [sample_config(SearchSpace(), rng).learning_rate for _ in range(1000)]
    assert min(rates) >= 0.01 and max(rates) <= 0.3
    # log-uniform: about half the draws below the geometric midpoint
    mid = math.sqrt(0.01 * 0.3)
    assert 0.43 < np.mean(np.array(rates) < mid) < 0.57


@given(st.integers(0, 2**32 - 1))
def test_samples_inside_space(seed):
    space = SearchSpace()
    assert space.contains(sample_config(space, np.random.default_rng(seed)))


def test_inverted_range_rejected():
    with pytest.raises(ValueError):
        SearchSpace(max_depth=(5, 2))


def test_sub_seeds_distinct_and_stable():
    seeds = [trial_seed(7, i) for i in range(50)]
    assert len(set(seeds)) == 50
    assert seeds == [trial_seed(7, i) for i in range(50)]


def test_budget_one():
    tr, va = _data()
    res = run_study(tr, va, SMALL, budget=1, seed=3)
    assert len(res.trials) == 1 and res.best_index == 0
    assert res.best_validation_auc == res.trials[0].validation_auc


def test_study_deterministic_and_argmax():
    tr, va = _data()
    a = run_study(tr, va, SMALL, budget=6, seed=4)
    b = run_study(tr, va, SMALL, budget=6, seed=4)
    assert a == b
    aucs = [t.validation_auc for t in a.trials]
    assert a.best_validation_auc == max(aucs)
    assert a.best_index == aucs.index(max(aucs))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 1000))
def test_best_so_far_monotone(seed):
    tr, va = _data(seed % 3)
    res = run_study(tr, va, SMALL, budget=5, seed=seed)
    best = [summarize(res.trials[: k + 1]).best_validation_auc for k in range(5)]
    assert all(b >= a for a, b in zip(best, best[1:]))


def test_prefix_of_study_is_stable():
    # trial i depends only on (seed, i)
    tr, va = _data()
    short = run_study(tr, va, SMALL, budget=3, seed=1)
    long = run_study(tr, va, SMALL, budget=5, seed=1)
    assert short.trials == long.trials[:3]


def test_failed_trials_recorded():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20, 3))
    single = TaskData(X, np.ones(20), ["t"])
    valid = TaskData(X, (X[:, 0] > 0).astype(float), ["t"])
    with pytest.raises(NoCompleteTrials):
        run_study(single, valid, SMALL, budget=2)


def test_earliest_trial_wins_ties():
    from molfusion.gbdt import GbdtConfig
    from molfusion.hpo import Trial
    cfg = GbdtConfig()
    trials = [Trial(0, 1, cfg, None, "failed", "x"), Trial(1, 2, cfg, 0.7, "complete"),
              Trial(2, 3, cfg, 0.7, "complete")]
    assert summarize(trials).best_index == 1


def test_study_log(tmp_path):
    tr, va = _data()
    res = run_study(tr, va, SMALL, budget=3, seed=2)
    write_study_log(tmp_path / "study.jsonl", res)
    lines = (tmp_path / "study.jsonl").read_text().splitlines()
    assert len(lines) == 3
    rec = json.loads(lines[0])
    assert set(rec) >= {"config", "validation_auc", "status", "sub_seed"}
    assert rec["sub_seed"] == trial_seed(2, 0)
