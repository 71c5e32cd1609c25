"""End-to-end benchmark: parse, split, embed, fuse, search, evaluate, persist."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from molfusion import gnn_encoder, seq_encoder
from molfusion.errors import NoValidTask, StageError
from molfusion.fusion import fuse_batch
from molfusion.gbdt import GbdtModel
from molfusion.hpo import SearchSpace, StudyResult, TaskData, evaluate_tasks, fit_tasks, run_study, write_study_log
from molfusion.io import (
    Dataset,
    EmbeddingMatrix,
    import_embeddings,
    load_dataset,
    read_bundle,
    read_cache,
    write_bundle,
    write_cache,
)
from molfusion.metrics import roc_curve, write_roc_csv
from molfusion.scaffold import (
    DEFAULT_FRACTIONS,
    SplitAssignment,
    murcko_scaffold,
    scaffold_key,
    scaffold_split,
    write_manifest,
)
from molfusion.smiles import parse, tokenize

log = logging.getLogger(__name__)

VIEWS = ("graph", "seq", "fused")


@dataclass
class RunConfig:
    dataset: str
    smiles_col: str = "smiles"
    task_cols: list[str] | None = None
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS
    seed: int = 0
    budget: int = 50
    length_policy: str = "strict"
    views: tuple[str, ...] = VIEWS
    lenient_parse: bool = False
    cache_dir: str | None = None
    out_dir: str | None = None
    import_graph: str | None = None
    import_seq: str | None = None
    graph_weights: str | None = None
    seq_weights: str | None = None
    vocab: str | None = None
    encoder_seed: int = 0
    gin_hidden: int = gnn_encoder.DEFAULT_HIDDEN
    seq_d_model: int = seq_encoder.SEQ_DIM
    seq_heads: int = 8
    seq_layers: int = 2
    pretrain_steps: int = 0
    space: SearchSpace = field(default_factory=SearchSpace)

    def __post_init__(self):
        bad = set(self.views) - set(VIEWS)
        if bad:
            raise ValueError(f"unknown view(s): {sorted(bad)}")
        if self.length_policy not in ("strict", "truncate"):
            raise ValueError(f"unknown length policy {self.length_policy!r}")


@dataclass
class Prepared:
    dataset: Dataset          # rows that parsed
    rows: list[int]           # their indices in the input file
    n_input: int
    graphs: list
    tokens: list[list[str]]
    dropped: list[tuple[int, str, str]]


def _stage(name):
    """Re-raise anything but StageError tagged with the pipeline stage."""
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_stage("load")
def _load(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.dataset, cfg.smiles_col, cfg.task_cols)


def prepare(cfg: RunConfig) -> Prepared:
    data = _load(cfg)
    rows, graphs, tokens, dropped = [], [], [], []
    for i, smi in enumerate(data.smiles):
        try:
            toks = tokenize(smi)
            g = parse(smi)
        except Exception as exc:
            if not cfg.lenient_parse:
                raise StageError("parse", exc, row=i) from exc
            log.warning("dropping row %d (%s): %s", i, smi, exc)
            dropped.append((i, smi, f"{type(exc).__name__}: {exc}"))
            continue
        rows.append(i)
        graphs.append(g)
        tokens.append(toks)
    if not rows:
        raise StageError("parse", ValueError("no parseable rows"))
    return Prepared(data.subset(rows), rows, len(data), graphs, tokens, dropped)


@_stage("split")
def split(cfg: RunConfig, prep: Prepared) -> SplitAssignment:
    keys = [scaffold_key(murcko_scaffold(g)) for g in prep.graphs]
    return scaffold_split(prep.graphs, cfg.fractions, keys=keys)


def _fingerprint(prep: Prepared, **settings) -> str:
    h = hashlib.sha256()
    h.update("\n".join(prep.dataset.smiles).encode("utf-8"))
    h.update(json.dumps(settings, sort_keys=True).encode("utf-8"))
    return h.hexdigest()[:16]


def _cached(cfg: RunConfig, name: str, compute) -> EmbeddingMatrix:
    if cfg.cache_dir is None:
        return compute()
    path = Path(cfg.cache_dir) / f"{name}.mvec"
    if path.exists():
        log.info("reusing cached embeddings %s", path)
        return read_cache(path)
    m = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    write_cache(m, path)
    return m


def _graph_params(cfg: RunConfig):
    if cfg.graph_weights:
        return gnn_encoder.GinParams.from_bundle(read_bundle(cfg.graph_weights))
    return gnn_encoder.init_gin(cfg.encoder_seed, cfg.gin_hidden)


def _seq_model(cfg: RunConfig, prep: Prepared):
    if cfg.vocab:
        vocab = seq_encoder.Vocabulary.load(cfg.vocab)
    else:
        vocab = seq_encoder.build_vocab(prep.tokens)
    if cfg.seq_weights:
        model = seq_encoder.SeqEncoder.from_bundle(read_bundle(cfg.seq_weights))
    else:
        model = seq_encoder.init_transformer(
            len(vocab), cfg.encoder_seed, cfg.seq_d_model, cfg.seq_heads, cfg.seq_layers
        )
        if cfg.pretrain_steps:
            model, trace = seq_encoder.pretrain_mlm(
                model, vocab, prep.tokens, cfg.pretrain_steps, seed=cfg.encoder_seed
            )
            log.info("MLM loss %.4f -> %.4f", trace.losses[0], trace.losses[-1])
    return model, vocab


@_stage("embed")
def graph_embeddings(cfg: RunConfig, prep: Prepared) -> EmbeddingMatrix:
    if cfg.import_graph:
        m = import_embeddings(cfg.import_graph, prep.n_input)
        return EmbeddingMatrix(m.values[prep.rows], "external")
    key = _fingerprint(prep, view="graph", seed=cfg.encoder_seed, hidden=cfg.gin_hidden,
                       weights=_file_digest(cfg.graph_weights))

    def compute():
        params = _graph_params(cfg)
        return EmbeddingMatrix(gnn_encoder.encode_graph_batch(params, prep.graphs), "graph")

    return _cached(cfg, f"graph-{key}", compute)


@_stage("embed")
def seq_embeddings(cfg: RunConfig, prep: Prepared) -> EmbeddingMatrix:
    if cfg.import_seq:
        m = import_embeddings(cfg.import_seq, prep.n_input)
        return EmbeddingMatrix(m.values[prep.rows], "external")
    key = _fingerprint(prep, view="seq", seed=cfg.encoder_seed, d_model=cfg.seq_d_model,
                       heads=cfg.seq_heads, layers=cfg.seq_layers, policy=cfg.length_policy,
                       pretrain=cfg.pretrain_steps, weights=_file_digest(cfg.seq_weights),
                       vocab=_file_digest(cfg.vocab))

    def compute():
        model, vocab = _seq_model(cfg, prep)
        values = seq_encoder.encode_sequence_batch(model, vocab, prep.tokens, cfg.length_policy)
        return EmbeddingMatrix(values, "seq")

    return _cached(cfg, f"seq-{key}", compute)


def _file_digest(path) -> str | None:
    if not path:
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def export_encoders(cfg: RunConfig, prep: Prepared, directory) -> None:
    """Write the encoder weights and vocabulary used for native embeddings."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_bundle(_graph_params(cfg).to_bundle(), directory / "gin.mwts")
    model, vocab = _seq_model(cfg, prep)
    write_bundle(model.to_bundle(), directory / "seq.mwts")
    vocab.save(directory / "vocab.txt")


def view_matrices(cfg: RunConfig, prep: Prepared, views=None) -> dict[str, EmbeddingMatrix]:
    views = tuple(views or cfg.views)
    need_graph = "graph" in views or "fused" in views
    need_seq = "seq" in views or "fused" in views
    out = {}
    if need_graph:
        out["graph"] = graph_embeddings(cfg, prep)
    if need_seq:
        out["seq"] = seq_embeddings(cfg, prep)
    if "fused" in views:
        try:
            fused = fuse_batch(out["graph"].values, out["seq"].values)
        except Exception as exc:
            raise StageError("fuse", exc) from exc
        out["fused"] = EmbeddingMatrix(fused, "fused")
    return {v: out[v] for v in views}


def _task_data(X: np.ndarray, data: Dataset, rows: list[int], tasks: list[int]) -> TaskData:
    return TaskData(X[rows].astype(np.float64), data.labels[np.ix_(rows, tasks)],
                    [data.task_names[t] for t in tasks])


def trainable_tasks(data: Dataset, train_rows: list[int]) -> list[int]:
    """Tasks whose training labels hold both classes."""
    out = []
    for t in range(len(data.task_names)):
        y = data.labels[train_rows, t]
        y = y[~np.isnan(y)]
        if y.size and y.min() != y.max():
            out.append(t)
        else:
            log.warning("task %s has a single class in the training fold; skipped",
                        data.task_names[t])
    return out


@dataclass
class ViewResult:
    study: StudyResult
    models: list[GbdtModel]
    tasks: list[int]


@_stage("train")
def train_view(cfg: RunConfig, prep: Prepared, assignment: SplitAssignment,
               matrix: EmbeddingMatrix) -> ViewResult:
    train_rows = assignment.indices("train")
    valid_rows = assignment.indices("valid")
    tasks = trainable_tasks(prep.dataset, train_rows)
    if not tasks:
        raise ValueError("no task has both classes in the training fold")
    tr = _task_data(matrix.values, prep.dataset, train_rows, tasks)
    va = _task_data(matrix.values, prep.dataset, valid_rows, tasks)
    study = run_study(tr, va, cfg.space, cfg.budget, cfg.seed)
    models = fit_tasks(tr, study.best_config)
    return ViewResult(study, models, tasks)


@_stage("evaluate")
def evaluate_view(prep: Prepared, assignment: SplitAssignment, matrix: EmbeddingMatrix,
                  models: list[GbdtModel], tasks: list[int]):
    test_rows = assignment.indices("test")
    te = _task_data(matrix.values, prep.dataset, test_rows, tasks)
    try:
        report, scores = evaluate_tasks(models, te)
    except NoValidTask:
        report, scores = None, None
    per_task = {name: None for name in prep.dataset.task_names}
    mean = None
    if report is not None:
        per_task.update(dict(report.per_task_auc))
        mean = report.mean_auc
    return per_task, mean, scores, te


def _config_dict(cfg) -> dict:
    return asdict(cfg)


def run_benchmark(cfg: RunConfig) -> dict:
    """Run every stage and, if ``cfg.out_dir`` is set, persist all artifacts."""
    prep = prepare(cfg)
    assignment = split(cfg, prep)
    matrices = view_matrices(cfg, prep)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(out / "split.csv", prep.dataset.smiles, assignment, prep.rows)
        if prep.dropped:
            _write_dropped(out / "dropped.csv", prep.dropped)

    metrics = {
        "dataset": str(cfg.dataset),
        "seed": cfg.seed,
        "fold_sizes": assignment.sizes(),
        "n_rows": len(prep.dataset),
        "n_dropped": len(prep.dropped),
        "views": {},
    }
    for view in cfg.views:
        result = train_view(cfg, prep, assignment, matrices[view])
        per_task, mean, scores, te = evaluate_view(
            prep, assignment, matrices[view], result.models, result.tasks
        )
        metrics["views"][view] = {
            "auc_per_task": per_task,
            "mean_auc": mean,
            "best_config": _config_dict(result.study.best_config),
            "best_validation_auc": result.study.best_validation_auc,
            "n_trials": len(result.study.trials),
        }
        log.info("%s view: test mean AUC %s", view, mean)
        if out is not None:
            write_study_log(out / f"study_{view}.jsonl", result.study)
            save_models(out, view, result)
            if len(prep.dataset.task_names) == 1 and mean is not None:
                write_roc_csv(out / f"roc_{view}.csv", roc_curve(scores[0], te.Y[:, 0]))
    if out is not None:
        (out / "metrics.json").write_text(metrics_json(metrics))
    return metrics


def metrics_json(metrics: dict) -> str:
    return json.dumps(metrics, indent=2, sort_keys=True) + "\n"


def _write_dropped(path, dropped) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "smiles", "error"])
        w.writerows(dropped)


def save_models(out: Path, view: str, result: ViewResult) -> None:
    mdir = out / "models"
    mdir.mkdir(parents=True, exist_ok=True)
    index = {"view": view, "tasks": result.tasks, "files": []}
    for t, model in zip(result.tasks, result.models):
        name = f"{view}_task{t}.json"
        (mdir / name).write_text(model.to_json())
        index["files"].append(name)
    (mdir / f"{view}.index.json").write_text(json.dumps(index, sort_keys=True))


def load_models(out: Path, view: str) -> tuple[list[GbdtModel], list[int]]:
    mdir = Path(out) / "models"
    index = json.loads((mdir / f"{view}.index.json").read_text())
    models = [GbdtModel.from_json((mdir / f).read_text()) for f in index["files"]]
    return models, index["tasks"]
