"""Command-line entry point: ``hierfs <subcommand> ...``.

Exit codes: 2 usage, 3 data/format, 4 hierarchy validation, 5 training.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shlex
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import SplitSpec, apply_idf, read_dataset, write_dataset
from .errors import DataFormatError, HierFSError, UnknownLabel
from .evaluation import compare_systems, evaluation_report, model_report
from .hierarchy import build_node_views, load_hierarchy
from .modelio import load_model, model_to_json, save_model
from .pipeline import PipelineConfig, fit, score_hierarchy
from .predictor import predict_batch, read_predictions, write_predictions
from .selection import TuningGrid
from .trainer import LAMBDA_GRID, TrainedModel, TrainingConfig, parameter_count, train_flat

log = logging.getLogger("hierfs")

THREADS_ENV = "HIERFS_THREADS"
DEFAULT_SEED = 42


class UsageError(HierFSError):
    exit_code = 2


# -- helpers -----------------------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def read_config_file(path) -> dict:
    """``key = value`` lines (TOML-like); ``#`` comments, optional quotes."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise DataFormatError(f"{path}:{lineno}: expected 'key = value'")
            value = value.strip().strip("'\"")
            if value.lower() in ("true", "false"):
                value = value.lower() == "true"
            out[key.strip().replace("-", "_")] = value
    return out


def _require(path, what):
    if path is None:
        raise UsageError(f"--{what} is required")
    if not Path(path).is_file():
        raise DataFormatError(f"{what} file not found: {path}")
    return path


def _floats(text) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _ints(text) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).split(",") if v.strip())


class Manifest:
    def __init__(self, args, inputs: dict):
        self.doc = {
            "tool": "hierfs",
            "version": __version__,
            "command_line": " ".join(shlex.quote(a) for a in sys.argv),
            "subcommand": args.command,
            "seed": getattr(args, "seed", None),
            "threads": getattr(args, "threads", None),
            "config": {k: v for k, v in vars(args).items() if k not in ("func",)},
            "inputs": {k: {"path": str(p), "sha256": file_sha256(p)} for k, p in inputs.items() if p},
            "stages": {},
        }
        self._t = {}

    def start(self, stage):
        self._t[stage] = time.perf_counter()

    def stop(self, stage):
        self.doc["stages"][stage] = time.perf_counter() - self._t.pop(stage)

    def write(self, out: Path, **extra):
        self.doc.update(extra)
        (out / "manifest.json").write_text(json.dumps(self.doc, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serialisable: {type(o)}")


def _load_inputs(args):
    h = load_hierarchy(_require(args.taxonomy, "taxonomy"))
    data = read_dataset(_require(args.data, "data"), one_based=args.one_based)
    build_node_views(h, data.labels)  # raises UnknownLabel early
    return h, data


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- subcommands ---------------------------------------------------------------------

def pipeline_config(args) -> PipelineConfig:
    training = TrainingConfig(
        lambdas=_floats(args.lambda_grid),
        regularizer=args.reg,
        max_epochs=int(args.max_epochs),
        tolerance=float(args.tol),
        seed=int(args.seed),
    )
    return PipelineConfig(
        fs_method=args.fs_method,
        fs_mode=args.fs_mode,
        grid=TuningGrid.parse(str(args.fs_grid)),
        training=training,
        split=SplitSpec(float(args.train_fraction), int(args.seed), not args.no_stratify),
        tfidf=bool(args.tfidf),
        kw_invert=bool(args.kw_invert),
        tune_metric=args.tune_metric,
        selection_lambda=args.selection_lambda,
        threads=int(args.threads),
    )


def cmd_train(args) -> int:
    h, data = _load_inputs(args)
    cfg = pipeline_config(args)
    man = Manifest(args, {"taxonomy": args.taxonomy, "data": args.data})
    log.info("seed %d, threads %d", cfg.split.seed, cfg.threads)
    man.start("train")
    if args.flat:
        if cfg.tfidf:
            from .corpus import fit_idf
            idf = fit_idf(data)
            data = apply_idf(data, idf)
        else:
            idf = None
        model = train_flat(data.X, data.labels, cfg.training, leaves=h.leaves,
                           lam=cfg.training.tune_lambda_value, threads=cfg.threads)
        model.idf = idf
        model.config = {"flat": True, "training": cfg.training.to_dict(), "tfidf": cfg.tfidf}
        report = {"flat": True}
    else:
        outcome = fit(h, data, cfg)
        model, report = outcome.model, outcome.report
    man.stop("train")
    out = _out_dir(args)
    save_model(model, out / "model.bin")
    if args.json_model:
        (out / "model.json").write_text(json.dumps(model_to_json(model), sort_keys=True))
    (out / "selection.json").write_text(
        json.dumps(report.get("selection", {}), indent=2, sort_keys=True, default=_json_default))
    timings = {k: v for k, v in model.manifest.items() if k.endswith("seconds") or k == "train_seconds_per_node"}
    summary = {k: v for k, v in report.items() if k != "selection"}
    man.write(out, parameter_count=model.parameter_count, timings=timings, report=summary)
    print(f"seed={cfg.split.seed} parameters={model.parameter_count:,} model={out / 'model.bin'}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(_require(args.model, "model"))
    data = read_dataset(_require(args.data, "data"), one_based=args.one_based)
    man = Manifest(args, {"model": args.model, "data": args.data})
    if model.idf is not None:
        data = apply_idf(data, model.idf)
    man.start("predict")
    preds = predict_batch(model, data.X, trace=args.trace)
    man.stop("predict")
    out = _out_dir(args)
    write_predictions(out / "predictions.tsv", preds, data.instance_ids)
    man.write(out, predict_seconds=preds.seconds, seconds_per_instance=preds.seconds_per_instance,
              mean_dot_products=float(preds.dot_products.mean()) if len(preds.labels) else 0.0,
              dropped_features=preds.dropped_features)
    return 0


def _read_truth(path, one_based):
    return read_dataset(path, one_based=one_based).labels


def cmd_evaluate(args) -> int:
    h = load_hierarchy(_require(args.taxonomy, "taxonomy"))
    truth = _read_truth(_require(args.truth, "truth"), args.one_based)
    _, pred = read_predictions(_require(args.pred, "pred"))
    if len(pred) != len(truth):
        raise DataFormatError(f"{len(pred)} predictions for {len(truth)} truth labels")
    man = Manifest(args, {"taxonomy": args.taxonomy, "truth": args.truth, "pred": args.pred,
                          "pred_b": args.pred_b})
    report = evaluation_report(h, truth, pred)
    if args.pred_b:
        _, pred_b = read_predictions(_require(args.pred_b, "pred-b"))
        if len(pred_b) != len(truth):
            raise DataFormatError("second prediction file length differs from truth")
        report["significance"] = compare_systems(h, truth, pred, pred_b)
    out = _out_dir(args)
    (out / "evaluation.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    man.write(out)
    print(f"micro_f1={report['micro_f1']:.4f} macro_f1={report['macro_f1']:.4f}")
    return 0


def cmd_score_features(args) -> int:
    h, data = _load_inputs(args)
    if args.fs_method == "none":
        raise UsageError("score-features needs a scoring method")
    if args.tfidf:
        data = apply_idf(data, __import__("hierfs.corpus", fromlist=["fit_idf"]).fit_idf(data))
    man = Manifest(args, {"taxonomy": args.taxonomy, "data": args.data})
    man.start("score")
    tables = score_hierarchy(h, data, args.fs_method, kw_invert=args.kw_invert, threads=int(args.threads))
    man.stop("score")
    out = _out_dir(args)
    sdir = out / "scores"
    sdir.mkdir(exist_ok=True)
    for node, t in tables.items():
        with open(sdir / f"node_{node}.tsv", "w", encoding="utf-8") as fh:
            fh.write("feature_id\tscore\trank\n")
            for rank, f in enumerate(t.rank_order.tolist(), start=1):
                fh.write(f"{f}\t{float(t.scores[f])!r}\t{rank}\n")
    man.write(out)
    return 0


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _gnuplot(path, csv_name, title, ylabel):
    path.write_text(
        "set datafile separator ','\n"
        f"set title '{title}'\nset ylabel '{ylabel}'\nset style data histogram\n"
        "set style fill solid\nset key autotitle columnhead\n"
        f"plot '{csv_name}' using 2:xtic(1)\n")


def cmd_report(args) -> int:
    out = _out_dir(args) if args.out else None
    if args.model:
        model = load_model(_require(args.model, "model"))
        if args.manifest:
            doc = json.loads(Path(args.manifest).read_text())
            model.manifest = dict(doc.get("timings", {}))
            model.manifest["report"] = doc.get("report", {})
        rep = model_report(model)
    else:
        h = load_hierarchy(_require(args.taxonomy, "taxonomy"))
        if args.num_features is None:
            raise UsageError("report needs --model, or --taxonomy with --num-features")
        count = parameter_count(h, int(args.num_features))
        from .evaluation import format_size
        rep = {"parameter_count": count, "parameter_count_formatted": f"{count:,}",
               "size_bytes": 4 * count, "size": format_size(4 * count),
               "num_internal_nodes": len(h.internal_nodes),
               "num_child_edges": h.num_edges, "num_features": int(args.num_features)}
        model = None
    print(f"{rep['parameter_count_formatted']} parameters ({rep['size']})")
    if out is None:
        return 0
    (out / "report.json").write_text(json.dumps(rep, indent=2, sort_keys=True, default=_json_default))
    if model is not None:
        _write_csv(out / "parameters.csv", ["node", "children", "features", "parameters"],
                   [[n, len(m.children), len(m.subset), m.num_parameters]
                    for n, m in model.node_models.items()])
        _gnuplot(out / "parameters.gp", "parameters.csv", "Parameters per node", "# parameters")
        scores = (model.manifest.get("report") or {}).get("global_scores")
        if scores:
            _write_csv(out / "fraction_scores.csv", ["fraction", "validation_score"],
                       [[k, v] for k, v in scores.items()])
            _gnuplot(out / "fraction_scores.gp", "fraction_scores.csv",
                     "Validation score vs feature fraction", "score")
    if args.evaluation:
        ev = json.loads(Path(args.evaluation).read_text())
        _write_csv(out / "level_error.csv", ["level", "error"],
                   [[k, v] for k, v in ev.get("per_level_error", {}).items()])
        _gnuplot(out / "level_error.gp", "level_error.csv", "Level-wise error", "error rate")
    return 0


def cmd_sweep(args) -> int:
    from .experiments import summarize_sweep, training_size_sweep

    if args.synthetic:
        from .synthetic import planted_benchmark
        bench = planted_benchmark(seed=int(args.seed), test_instances=2000)
        h, pool, test = bench.hierarchy, bench.data, bench.test
        inputs = {}
    else:
        h, pool = _load_inputs(args)
        test = read_dataset(_require(args.test, "test"), one_based=args.one_based,
                            num_features=None).with_num_features(pool.num_features)
        inputs = {"taxonomy": args.taxonomy, "data": args.data, "test": args.test}
    man = Manifest(args, inputs)
    cfg = pipeline_config(args)
    man.start("sweep")
    rows = training_size_sweep(h, pool, test, sizes=_ints(args.sizes), repeats=int(args.repeats),
                               cfg=cfg, val_per_class=int(args.val_per_class), seed=int(args.seed))
    man.stop("sweep")
    summary = summarize_sweep(rows)
    out = _out_dir(args)
    (out / "sweep.json").write_text(json.dumps({"runs": rows, "summary": summary}, indent=2))
    if summary:
        _write_csv(out / "sweep.csv", list(summary[0]), [list(s.values()) for s in summary])
    man.write(out)
    for s in summary:
        print(f"t={s['per_class']}: FS {s['fs_micro_f1_mean']:.4f} vs all {s['all_micro_f1_mean']:.4f}")
    return 0


# -- parser ----------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, default=None, help=f"worker threads (env {THREADS_ENV})")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--one-based", action="store_true", help="feature indices start at 1")
    p.add_argument("--config", help="key = value defaults file")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model_opts(p):
    p.add_argument("--fs-method", default="gini", choices=["gini", "mrmr-d", "mrmr-q", "kw", "none"])
    p.add_argument("--fs-mode", default="global", choices=["global", "adaptive"])
    p.add_argument("--fs-grid", default="0.01,0.02,0.05,0.10,0.25,0.40,0.50,0.60,0.75")
    p.add_argument("--reg", default="l1", choices=["l1", "l2"])
    p.add_argument("--lambda-grid", default=",".join(str(v) for v in LAMBDA_GRID))
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--train-fraction", type=float, default=0.9)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--tfidf", action="store_true", help="apply tf-idf + L2 (idf frozen into the model)")
    p.add_argument("--kw-invert", action="store_true", help="rank smaller Kruskal-Wallis H first")
    p.add_argument("--tune-metric", default="micro", choices=["micro", "macro"])
    p.add_argument("--selection-lambda", default="pretuned", choices=["pretuned", "fixed"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hierfs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hierfs {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="score, select and train a top-down model")
    _add_common(p)
    _add_model_opts(p)
    p.add_argument("--taxonomy")
    p.add_argument("--data")
    p.add_argument("--json-model", action="store_true")
    p.add_argument("--flat", action="store_true", help="flat one-vs-rest over leaves (comparison only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="top-down prediction")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--data")
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="micro/macro F1, level-wise error, significance")
    _add_common(p)
    p.add_argument("--taxonomy")
    p.add_argument("--truth", help="data file whose labels are the ground truth")
    p.add_argument("--pred")
    p.add_argument("--pred-b", help="second predictions file for significance tests")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score-features", help="per-node feature score tables")
    _add_common(p)
    p.add_argument("--taxonomy")
    p.add_argument("--data")
    p.add_argument("--fs-method", default="gini", choices=["gini", "mrmr-d", "mrmr-q", "kw", "none"])
    p.add_argument("--tfidf", action="store_true")
    p.add_argument("--kw-invert", action="store_true")
    p.set_defaults(func=cmd_score_features)

    p = sub.add_parser("report", help="parameter count, size and CSV bundle")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--manifest")
    p.add_argument("--evaluation", help="evaluation.json for the level-wise error CSV")
    p.add_argument("--taxonomy")
    p.add_argument("--num-features", type=int)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="training-size experiment")
    _add_common(p)
    _add_model_opts(p)
    p.set_defaults(fs_mode="adaptive", tfidf=True)
    p.add_argument("--taxonomy")
    p.add_argument("--data")
    p.add_argument("--test")
    p.add_argument("--synthetic", action="store_true", help="use the planted benchmark")
    p.add_argument("--sizes", default="5,10,15,25")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--val-per-class", type=int, default=10)
    p.set_defaults(func=cmd_sweep)
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        conf = read_config_file(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(conf) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except HierFSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HierFSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
