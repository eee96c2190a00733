"""``mondrian`` command-line tool.

Exit status: 0 on success, 1 on invalid input or I/O failure, 2 when a
statistical self-check (equivalence-test, mc-check) fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import harness
from .data import Scaling, apply_scaling, fit_scaling, load_train_test, write_run_metadata
from .forest import ForestConfig, MondrianForest, NotFittedError

EXIT_OK, EXIT_INPUT, EXIT_CHECK_FAILED = 0, 1, 2


def _lifetime(s: str) -> float:
    v = float(s)
    if math.isnan(v) or v < 0:
        raise argparse.ArgumentTypeError("lifetime must be a non-negative number or 'inf'")
    return v


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return v


def _fractions(s: str) -> list[float]:
    try:
        return [float(t) for t in s.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mondrian", description="Mondrian forest experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    common.add_argument("--out", help="output file (default: stdout)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--trees", type=_positive_int, default=100)
    model.add_argument("--lifetime", type=_lifetime, default=math.inf)
    model.add_argument("--gamma-mult", type=float, default=10.0)
    model.add_argument("--pausing", choices=("on", "off"), default="on")
    model.add_argument("--n-jobs", type=int, default=1, help="joblib workers for tree growth")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("train")
    data.add_argument("test")
    data.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    data.add_argument("--skip-header", action="store_true", help="ignore the first line of CSV files")
    data.add_argument("--no-shuffle", action="store_true", help="stream points in file order")
    data.add_argument("--seeds", type=_positive_int, default=5, help="number of runs (default 5)")
    data.add_argument("--snapshot", help="write the last run's final forest here (.gz to compress)")

    p = sub.add_parser("eval-online", parents=[common, model, data],
                       help="stream mini-batches and record test accuracy")
    p.add_argument("--batches", type=_positive_int, default=100)

    p = sub.add_parser("eval-batch", parents=[common, model, data],
                       help="fit from scratch on growing prefixes of the training split")
    p.add_argument("--fractions", type=_fractions, default=[1.0],
                   help="comma-separated fractions in (0, 1] (default 1.0)")

    p = sub.add_parser("depth-stats", parents=[common, model],
                       help="data-weighted depth of a batch-trained forest")
    p.add_argument("train")
    p.add_argument("--format", choices=("csv", "libsvm"), default="csv")
    p.add_argument("--skip-header", action="store_true")

    p = sub.add_parser("equivalence-test", parents=[common],
                       help="KS test: online vs batch tree shape distributions")
    p.add_argument("--seeds", type=_positive_int, default=2000)
    p.add_argument("--num-points", type=_positive_int, default=50)
    p.add_argument("--lifetime", type=_lifetime, default=math.inf)
    p.add_argument("--pausing", choices=("on", "off"), default="off")
    p.add_argument("--orders", action="store_true",
                   help="compare two insertion orders instead of online vs batch")
    p.add_argument("--break-extension", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("mc-check", parents=[common],
                       help="analytic vs Monte-Carlo prediction on random trees")
    p.add_argument("--fixtures", type=_positive_int, default=20)
    p.add_argument("--samples", type=_positive_int, default=100_000)
    p.add_argument("--tolerance", type=float, default=0.01)

    p = sub.add_parser("predict", help="class probabilities for one point from a snapshot")
    p.add_argument("--snapshot", required=True)
    p.add_argument("--point", required=True, help="comma-separated raw feature values")
    p.add_argument("--meta", help="run metadata file; applies its scaling and label names")
    p.add_argument("--out")
    return parser


# -- output helpers -------------------------------------------------------

def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="") if path else _Stdout()


class _Stdout(io.TextIOBase):
    def write(self, s):
        return sys.stdout.write(s)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        sys.stdout.flush()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def _write_report(report: dict, path) -> None:
    with _open_out(path) as fh:
        json.dump(_json_safe(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def write_records(records, path) -> list:
    """Stream records as CSV rows; returns them for the summary files."""
    rows = []
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(harness.RECORD_FIELDS)
        for rec in records:
            w.writerow([_fmt(getattr(rec, f)) for f in harness.RECORD_FIELDS])
            fh.flush()
            rows.append(rec)
    return rows


def write_plot_data(records, path) -> None:
    """Whitespace-separated per-batch means over seeds, for gnuplot/vega."""
    by_batch: dict[int, list] = {}
    for r in records:
        by_batch.setdefault(r.batch, []).append(r)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# batch fraction_seen mean_accuracy std_accuracy mean_train_seconds "
                 "mean_weighted_depth num_seeds\n")
        for b in sorted(by_batch):
            rs = by_batch[b]
            acc = np.array([r.test_accuracy for r in rs])
            fh.write(" ".join([
                str(b), repr(rs[0].fraction_seen), repr(float(acc.mean())),
                repr(float(acc.std(ddof=1)) if len(rs) > 1 else 0.0),
                repr(float(np.mean([r.cumulative_train_seconds for r in rs]))),
                repr(float(np.mean([r.mean_weighted_depth for r in rs]))), str(len(rs)),
            ]) + "\n")


def _sidecar(out, suffix):
    return str(Path(out).with_suffix(suffix)) if out else None


# -- commands -------------------------------------------------------------

def _config(args, num_classes, num_features) -> ForestConfig:
    return ForestConfig(
        num_classes=num_classes, num_features=num_features, num_trees=args.trees,
        lifetime=args.lifetime, gamma_multiplier=args.gamma_mult, seed=args.seed,
        use_pausing=args.pausing == "on",
    )


def _load_scaled(args):
    train, test = load_train_test(args.train, args.test, args.format, args.skip_header)
    scaling = fit_scaling(train)
    return apply_scaling(scaling, train), apply_scaling(scaling, test)


def _run_eval(args, online: bool) -> int:
    train, test = _load_scaled(args)
    cfg = _config(args, train.num_classes, train.num_features)
    seeds = range(args.seed, args.seed + args.seeds)
    shuffle = not args.no_shuffle
    forests: list = []
    if online:
        recs = harness.eval_online(train, test, cfg, args.batches, shuffle, seeds,
                                   args.n_jobs, forests)
        extra = {"batches": args.batches}
    else:
        recs = harness.eval_batch(train, test, cfg, args.fractions, shuffle, seeds, args.n_jobs)
        extra = {"fractions": args.fractions}
    rows = write_records(recs, args.out)
    if args.out:
        write_plot_data(rows, _sidecar(args.out, ".dat"))
        write_run_metadata(_sidecar(args.out, ".meta.json"), train.scaling, train.label_map, {
            "command": args.command, "config": cfg.to_dict(), "seeds": list(seeds),
            "shuffle": shuffle, "train": str(args.train), "test": str(args.test),
            "num_train": train.num_points, "num_test": test.num_points,
            "columns": harness.RECORD_FIELDS, "timing_columns": list(harness.TIMING_FIELDS),
            **extra,
        })
    if args.snapshot and forests:
        forests[-1].save(args.snapshot)
    return EXIT_OK


def cmd_eval_online(args) -> int:
    return _run_eval(args, online=True)


def cmd_eval_batch(args) -> int:
    return _run_eval(args, online=False)


def cmd_depth_stats(args) -> int:
    from .data import load_dataset

    train = load_dataset(args.train, args.format, skip_header=args.skip_header)
    train = apply_scaling(fit_scaling(train), train)
    report = harness.depth_stats(train, _config(args, max(2, train.num_classes), train.num_features),
                                 n_jobs=args.n_jobs)
    _write_report(report, args.out)
    return EXIT_OK


def cmd_equivalence_test(args) -> int:
    kwargs = dict(num_points=args.num_points, num_seeds=args.seeds, lifetime=args.lifetime,
                  base_seed=args.seed, use_pausing=args.pausing == "on")
    if args.orders:
        report = harness.order_invariance_test(**kwargs)
    else:
        report = harness.equivalence_test(mutate=args.break_extension, **kwargs)
    for w in report["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    _write_report(report, args.out)
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


def cmd_mc_check(args) -> int:
    report = harness.mc_check(args.fixtures, args.samples, args.seed, args.tolerance)
    _write_report(report, args.out)
    return EXIT_OK if report["pass"] else EXIT_CHECK_FAILED


def cmd_predict(args) -> int:
    forest = MondrianForest.load(args.snapshot)
    try:
        x = np.array([float(t) for t in args.point.split(",")])
    except ValueError:
        raise ValueError(f"cannot parse point {args.point!r}") from None
    names = [str(k) for k in range(forest.config.num_classes)]
    if args.meta:
        with open(args.meta, encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("scaling"):
            s = Scaling.from_dict(meta["scaling"])
            safe = np.where(s.range > 0, s.range, 1.0)
            if x.shape != s.minimum.shape:
                raise ValueError(f"expected {s.minimum.size} features, got {x.size}")
            x = np.where(s.range > 0, (x - s.minimum) / safe, 0.0)
        for raw, k in meta.get("label_map", {}).items():
            names[int(k)] = raw
    proba = forest.predict_proba(x)
    with _open_out(args.out) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "probability"])
        for name, p in zip(names, proba):
            w.writerow([name, repr(float(p))])
    return EXIT_OK


COMMANDS = {
    "eval-online": cmd_eval_online,
    "eval-batch": cmd_eval_batch,
    "depth-stats": cmd_depth_stats,
    "equivalence-test": cmd_equivalence_test,
    "mc-check": cmd_mc_check,
    "predict": cmd_predict,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; fold those into input errors
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, NotFittedError, KeyError) as exc:
        print(f"mondrian: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
