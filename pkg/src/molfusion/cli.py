"""Command line entry point: ``molfusion {embed,split,train,evaluate,benchmark,import}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from molfusion import pipeline
from molfusion.errors import MolFusionError
from molfusion.hpo import write_study_log
from molfusion.io import import_embeddings, load_dataset, write_cache
from molfusion.metrics import roc_curve, write_roc_csv
from molfusion.scaffold import write_manifest

log = logging.getLogger("molfusion")


def _floats(text):
    return tuple(float(x) for x in text.split(","))


def _names(text):
    return [x for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--dataset", required=True, help="CSV with a header row")
    shared.add_argument("--smiles-col", default="smiles")
    shared.add_argument("--task-cols", type=_names, default=None,
                        help="comma-separated label columns (default: all but the SMILES column)")
    shared.add_argument("--fractions", type=_floats, default=(0.8, 0.1, 0.1))
    shared.add_argument("--seed", type=int, default=0, help="study seed")
    shared.add_argument("--budget", type=int, default=50, help="search trials per view")
    shared.add_argument("--views", type=_names, default=list(pipeline.VIEWS))
    shared.add_argument("--length-policy", choices=("strict", "truncate"), default="strict")
    shared.add_argument("--lenient-parse", action="store_true",
                        help="drop unparseable rows instead of aborting")
    shared.add_argument("--cache", default=None, help="embedding cache directory")
    shared.add_argument("--out", default=None, help="output directory")
    shared.add_argument("--import-graph", default=None, help="external graph-view embeddings")
    shared.add_argument("--import-seq", default=None, help="external sequence-view embeddings")
    shared.add_argument("--graph-weights", default=None, help="GIN weight bundle")
    shared.add_argument("--seq-weights", default=None, help="transformer weight bundle")
    shared.add_argument("--vocab", default=None, help="vocabulary file for --seq-weights")
    shared.add_argument("--encoder-seed", type=int, default=0)
    shared.add_argument("--pretrain-steps", type=int, default=0,
                        help="masked-LM steps on the dataset SMILES before encoding")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="molfusion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("embed", "compute embeddings into the cache"),
        ("split", "write the scaffold split manifest"),
        ("train", "run the hyperparameter study and save models"),
        ("evaluate", "score saved models on the test fold"),
        ("benchmark", "run every stage end to end"),
        ("import", "validate external embeddings and store them in the cache"),
    ]:
        sub.add_parser(name, parents=[shared], help=help_)
    return parser


def _config(args) -> pipeline.RunConfig:
    return pipeline.RunConfig(
        dataset=args.dataset,
        smiles_col=args.smiles_col,
        task_cols=args.task_cols,
        fractions=args.fractions,
        seed=args.seed,
        budget=args.budget,
        length_policy=args.length_policy,
        views=tuple(args.views),
        lenient_parse=args.lenient_parse,
        cache_dir=args.cache,
        out_dir=args.out,
        import_graph=args.import_graph,
        import_seq=args.import_seq,
        graph_weights=args.graph_weights,
        seq_weights=args.seq_weights,
        vocab=args.vocab,
        encoder_seed=args.encoder_seed,
        pretrain_steps=args.pretrain_steps,
    )


def _require(value, flag):
    if not value:
        raise SystemExit(f"error: {flag} is required for this command")
    return Path(value)


def cmd_embed(cfg, args):
    cache = _require(cfg.cache_dir, "--cache")
    cache.mkdir(parents=True, exist_ok=True)
    prep = pipeline.prepare(cfg)
    for view, m in pipeline.view_matrices(cfg, prep).items():
        write_cache(m, cache / f"{view}.mvec")
        print(f"{view}: {m.rows} x {m.dim} -> {cache / f'{view}.mvec'}")
    pipeline.export_encoders(cfg, prep, cache)


def cmd_split(cfg, args):
    out = _require(cfg.out_dir, "--out")
    out.mkdir(parents=True, exist_ok=True)
    prep = pipeline.prepare(cfg)
    assignment = pipeline.split(cfg, prep)
    write_manifest(out / "split.csv", prep.dataset.smiles, assignment, prep.rows)
    print(json.dumps(assignment.sizes()))


def cmd_train(cfg, args):
    out = _require(cfg.out_dir, "--out")
    out.mkdir(parents=True, exist_ok=True)
    prep = pipeline.prepare(cfg)
    assignment = pipeline.split(cfg, prep)
    write_manifest(out / "split.csv", prep.dataset.smiles, assignment, prep.rows)
    matrices = pipeline.view_matrices(cfg, prep)
    for view in cfg.views:
        result = pipeline.train_view(cfg, prep, assignment, matrices[view])
        pipeline.save_models(out, view, result)
        write_study_log(out / f"study_{view}.jsonl", result.study)
        print(f"{view}: best validation AUC {result.study.best_validation_auc:.4f}")


def cmd_evaluate(cfg, args):
    out = _require(cfg.out_dir, "--out")
    prep = pipeline.prepare(cfg)
    assignment = pipeline.split(cfg, prep)
    matrices = pipeline.view_matrices(cfg, prep)
    metrics = {"dataset": str(cfg.dataset), "seed": cfg.seed,
               "fold_sizes": assignment.sizes(), "views": {}}
    for view in cfg.views:
        models, tasks = pipeline.load_models(out, view)
        per_task, mean, scores, te = pipeline.evaluate_view(
            prep, assignment, matrices[view], models, tasks)
        metrics["views"][view] = {"auc_per_task": per_task, "mean_auc": mean,
                                  "best_config": None, "n_trials": None}
        if len(prep.dataset.task_names) == 1 and mean is not None:
            write_roc_csv(out / f"roc_{view}.csv", roc_curve(scores[0], te.Y[:, 0]))
    (out / "evaluation.json").write_text(pipeline.metrics_json(metrics))
    print(pipeline.metrics_json(metrics), end="")


def cmd_benchmark(cfg, args):
    metrics = pipeline.run_benchmark(cfg)
    print(pipeline.metrics_json(metrics), end="")


def cmd_import(cfg, args):
    cache = _require(cfg.cache_dir, "--cache")
    cache.mkdir(parents=True, exist_ok=True)
    n = len(load_dataset(cfg.dataset, cfg.smiles_col, cfg.task_cols))
    done = False
    for view, path in (("graph", cfg.import_graph), ("seq", cfg.import_seq)):
        if path:
            m = import_embeddings(path, n)
            write_cache(m, cache / f"{view}.external.mvec")
            print(f"{view}: {m.rows} x {m.dim} -> {cache / f'{view}.external.mvec'}")
            done = True
    if not done:
        raise SystemExit("error: import needs --import-graph and/or --import-seq")


COMMANDS = {
    "embed": cmd_embed,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "import": cmd_import,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _config(args)
        COMMANDS[args.command](cfg, args)
    except (MolFusionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
