"""Seeded random-search study over boosted-tree hyperparameters."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from molfusion.errors import NoCompleteTrials
from molfusion.gbdt import GbdtConfig, GbdtModel, predict, train
from molfusion.metrics import MetricsReport, multitask_auc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    num_rounds: tuple[int, int] = (50, 500)
    max_depth: tuple[int, int] = (2, 8)
    learning_rate: tuple[float, float] = (0.01, 0.3)      # log-uniform
    reg_lambda: tuple[float, float] = (1e-3, 10.0)        # log-uniform
    gamma: tuple[float, float] = (0.0, 5.0)
    min_child_weight: tuple[float, float] = (0.0, 10.0)
    subsample: tuple[float, float] = (0.5, 1.0)
    colsample: tuple[float, float] = (0.3, 1.0)

    def __post_init__(self):
        for name, (lo, hi) in asdict(self).items():
            if lo > hi:
                raise ValueError(f"{name}: lower bound {lo} exceeds upper bound {hi}")

    def contains(self, cfg: GbdtConfig) -> bool:
        return all(lo <= getattr(cfg, name) <= hi for name, (lo, hi) in asdict(self).items())


@dataclass
class TaskData:
    """Feature matrix with a row x task label table (NaN = missing)."""

    X: np.ndarray
    Y: np.ndarray
    task_names: list[str]

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.Y.ndim == 1:
            self.Y = self.Y[:, None]
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError("X and Y row counts differ")


@dataclass
class Trial:
    index: int
    sub_seed: int
    config: GbdtConfig
    validation_auc: float | None
    status: str
    error: str | None = None


@dataclass
class StudyResult:
    trials: list[Trial]
    best_index: int
    best_config: GbdtConfig
    best_validation_auc: float


def _integer(rng, lo, hi):
    return int(lo) if lo == hi else int(rng.integers(int(lo), int(hi) + 1))


def _uniform(rng, lo, hi):
    return float(lo) if lo == hi else float(rng.uniform(lo, hi))


def _log_uniform(rng, lo, hi):
    if lo == hi:
        return float(lo)
    return float(min(hi, max(lo, math.exp(rng.uniform(math.log(lo), math.log(hi))))))


def sample_config(space: SearchSpace, rng: np.random.Generator, seed: int = 0) -> GbdtConfig:
    return GbdtConfig(
        num_rounds=_integer(rng, *space.num_rounds),
        max_depth=_integer(rng, *space.max_depth),
        learning_rate=_log_uniform(rng, *space.learning_rate),
        reg_lambda=_log_uniform(rng, *space.reg_lambda),
        gamma=_uniform(rng, *space.gamma),
        min_child_weight=_uniform(rng, *space.min_child_weight),
        subsample=_uniform(rng, *space.subsample),
        colsample=_uniform(rng, *space.colsample),
        seed=seed,
    )


def trial_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def fit_tasks(data: TaskData, cfg: GbdtConfig) -> list[GbdtModel]:
    """One independent model per task column."""
    return [train(data.X, data.Y[:, t], cfg)[0] for t in range(data.Y.shape[1])]


def evaluate_tasks(models: list[GbdtModel], data: TaskData) -> tuple[MetricsReport, list[np.ndarray]]:
    scores = [predict(m, data.X) for m in models]
    report = multitask_auc(
        [(s, data.Y[:, t]) for t, s in enumerate(scores)], data.task_names
    )
    return report, scores


def run_trial(train_data: TaskData, valid_data: TaskData, space: SearchSpace,
              seed: int, index: int) -> Trial:
    sub = trial_seed(seed, index)
    cfg = sample_config(space, np.random.default_rng(sub), seed=sub)
    try:
        models = fit_tasks(train_data, cfg)
        report, _ = evaluate_tasks(models, valid_data)
    except Exception as exc:  # recorded, the study carries on
        log.warning("trial %d failed: %s", index, exc)
        return Trial(index, sub, cfg, None, "failed", f"{type(exc).__name__}: {exc}")
    return Trial(index, sub, cfg, report.mean_auc, "complete")


def summarize(trials: list[Trial]) -> StudyResult:
    complete = [t for t in trials if t.status == "complete"]
    if not complete:
        raise NoCompleteTrials(f"all {len(trials)} trials failed")
    best = complete[0]
    for t in complete[1:]:
        if t.validation_auc > best.validation_auc:
            best = t
    return StudyResult(trials, best.index, best.config, best.validation_auc)


def run_study(train_data: TaskData, valid_data: TaskData, space: SearchSpace | None = None,
              budget: int = 50, seed: int = 0) -> StudyResult:
    """Random search maximizing mean validation AUC; earliest trial wins ties."""
    if budget < 1:
        raise ValueError("budget must be at least 1")
    space = space or SearchSpace()
    trials = [run_trial(train_data, valid_data, space, seed, i) for i in range(budget)]
    return summarize(trials)


def write_study_log(path, result: StudyResult) -> None:
    with open(path, "w") as fh:
        for t in result.trials:
            fh.write(json.dumps({
                "index": t.index,
                "sub_seed": t.sub_seed,
                "config": asdict(t.config),
                "validation_auc": t.validation_auc,
                "status": t.status,
                "error": t.error,
            }, sort_keys=True) + "\n")
