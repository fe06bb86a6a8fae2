"""``flowknn`` command line: extract, synth, tune-k, eval, bench, classify."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time

from . import __version__
from .dataset import Dataset, SplitSpec, SynthConfig, load_label_table, split, synth_generate
from .evalbench import bench_selectors, evaluate, tune_k
from .flowfeat import (
    DEFAULT_WINDOW_LENGTH,
    MalformedRowError,
    extract_features,
    fmt_window_start,
    ingest_packets,
    read_feature_csv,
    windowize,
    write_feature_csv,
)
from .knn import KnnConfig, classify
from .selectors import STRATEGIES

log = logging.getLogger("flowknn")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class CliError(Exception):
    """Runtime failure; reported on stderr with exit code 1."""


class UsageError(Exception):
    """Bad flag value caught after parsing; exit code 2."""


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="flowknn", description="Flow-window KNN classification and selector benchmarks.",
                                formatter_class=fmt)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)

    def io_flags(sp, in_help, out_help="output path (stdout when omitted)"):
        sp.add_argument("--in", dest="input", required=True, help=in_help)
        sp.add_argument("--out", default=None, help=out_help)

    def knn_flags(sp):
        sp.add_argument("--k", type=int, default=5, help="neighbour count")
        sp.add_argument("--selector", default="kmin", choices=STRATEGIES, help="neighbour selection strategy")
        sp.add_argument("--sequential", action="store_true", help="run selectors in sequential reference mode")

    sp = add("extract", "turn a packet CSV into a feature CSV, one row per device flow window")
    io_flags(sp, "packet CSV (timestamp,device_id,src_ip,dst_ip,protocol,size,direction)")
    sp.add_argument("--window-length", type=float, default=DEFAULT_WINDOW_LENGTH, help="window length in seconds")
    sp.add_argument("--strict", action="store_true", help="abort on the first malformed row instead of skipping it")

    sp = add("synth", "write a synthetic labeled feature CSV")
    sp.add_argument("--out", default=None, help="output path (stdout when omitted)")
    sp.add_argument("--classes", type=int, default=6, help="class count, one of them a UDP flood")
    sp.add_argument("--samples-per-class", type=int, default=2000, help="samples per class")
    sp.add_argument("--spread", type=float, default=0.04, help="noise half-width as a fraction of each feature's domain")
    sp.add_argument("--label-noise", type=float, default=0.02, help="fraction of samples given a wrong label")
    sp.add_argument("--seed", type=int, default=0, help="random seed")

    sp = add("tune-k", "pick k by stratified k-fold cross validation")
    io_flags(sp, "labeled feature CSV")
    sp.add_argument("--ks", type=_int_list, default="1,3,5,7,9,11", help="candidate k values")
    sp.add_argument("--folds", type=int, default=10, help="cross-validation folds")
    sp.add_argument("--seed", type=int, default=0, help="fold assignment seed")
    sp.add_argument("--selector", default="kmin", choices=STRATEGIES, help="neighbour selection strategy")
    sp.add_argument("--sequential", action="store_true", help="run selectors in sequential reference mode")

    sp = add("eval", "stratified train/test split, then test accuracy and confusion matrix")
    io_flags(sp, "labeled feature CSV")
    knn_flags(sp)
    sp.add_argument("--split", type=float, default=0.5, help="training fraction")
    sp.add_argument("--seed", type=int, default=0, help="split seed")

    sp = add("bench", "count operations and time each selector on seeded random inputs")
    sp.add_argument("--out", default=None, help="output path (stdout when omitted)")
    sp.add_argument("--sizes", type=_int_list, default="1000", help="input sizes n")
    sp.add_argument("--ks", type=_int_list, default="5", help="k values")
    sp.add_argument("--strategies", type=_str_list, default=",".join(STRATEGIES), help="comma-separated selectors")
    sp.add_argument("--reps", type=int, default=3, help="repetitions per cell")
    sp.add_argument("--seed", type=int, default=0, help="input seed")
    sp.add_argument("--sequential", action="store_true", help="run selectors in sequential reference mode")

    sp = add("classify", "classify unlabeled feature rows against a labeled training CSV")
    sp.add_argument("--model", required=True, help="labeled training feature CSV")
    sp.add_argument("--labels", default=None, help="label table JSON fixing label ordinals")
    io_flags(sp, "feature CSV of queries (label column optional and ignored)")
    knn_flags(sp)
    return p


def _validate(args) -> None:
    checks = [
        ("k", lambda v: v >= 1, "--k must be >= 1"),
        ("window_length", lambda v: v > 0, "--window-length must be positive"),
        ("split", lambda v: 0 < v < 1, "--split must be in (0, 1)"),
        ("folds", lambda v: v >= 2, "--folds must be >= 2"),
        ("reps", lambda v: v >= 1, "--reps must be >= 1"),
        ("classes", lambda v: v >= 2, "--classes must be >= 2"),
        ("samples_per_class", lambda v: v >= 1, "--samples-per-class must be >= 1"),
        ("spread", lambda v: v >= 0, "--spread must be >= 0"),
        ("label_noise", lambda v: 0 <= v < 1, "--label-noise must be in [0, 1)"),
        ("ks", lambda v: bool(v) and min(v) >= 1, "--ks must list positive integers"),
        ("sizes", lambda v: bool(v) and min(v) >= 1, "--sizes must list positive integers"),
    ]
    for attr, ok, msg in checks:
        if hasattr(args, attr) and not ok(getattr(args, attr)):
            raise UsageError(msg)
    if hasattr(args, "strategies"):
        bad = [s for s in args.strategies if s not in STRATEGIES]
        if bad or not args.strategies:
            raise UsageError(f"--strategies: unknown {', '.join(bad) or '(empty)'}; valid: {', '.join(STRATEGIES)}")


class _Output:
    """Text sink: stdout, or a temp file renamed over ``path`` on success."""

    def __init__(self, path, stdout):
        self.path = path
        self.stdout = stdout
        self._tmp = None

    def __enter__(self):
        if self.path is None:
            return self.stdout
        d = os.path.dirname(os.path.abspath(self.path))
        fd, self._tmp = tempfile.mkstemp(prefix=".flowknn-", dir=d)
        self._fh = os.fdopen(fd, "w", encoding="utf-8", newline="")
        return self._fh

    def __exit__(self, exc_type, exc, tb):
        if self.path is None:
            self.stdout.flush()
            return False
        self._fh.close()
        if exc_type is None:
            os.replace(self._tmp, self.path)
        else:
            os.unlink(self._tmp)
        return False


def _open_in(path):
    try:
        return open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _load_dataset(path, label_table=None) -> Dataset:
    with _open_in(path) as fh:
        records = read_feature_csv(fh, require_label=True)
    if not records:
        raise CliError(f"{path}: no samples")
    try:
        return Dataset.from_records(records, label_table)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def cmd_extract(args, stdout):
    errors = []
    with _open_in(args.input) as fh:
        packets = ingest_packets(fh, strict=args.strict, errors=errors)
    for e in errors:
        log.warning("skipped %s", e)
    if errors:
        log.warning("%d malformed rows skipped", len(errors))
    windows = windowize(packets, args.window_length)
    log.info("%d packets -> %d windows", len(packets), len(windows))
    with _Output(args.out, stdout) as out:
        write_feature_csv(out, ((w.device_id, w.window_start, extract_features(w)) for w in windows))


def cmd_synth(args, stdout):
    try:
        cfg = SynthConfig(args.classes, args.samples_per_class, args.spread, args.seed, args.label_noise)
        data = synth_generate(cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    with _Output(args.out, stdout) as out:
        data.write_csv(out)


def cmd_tune_k(args, stdout):
    data = _load_dataset(args.input)
    try:
        res = tune_k(data, args.ks, args.folds, args.seed, args.selector, parallel=not args.sequential)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    for k in res.skipped:
        log.warning("k=%d skipped: larger than the smallest training fold", k)
    with _Output(args.out, stdout) as out:
        out.write(res.to_json() + "\n")


def cmd_eval(args, stdout):
    data = _load_dataset(args.input)
    train, test = split(data, SplitSpec(args.split, args.seed))
    if len(test) == 0:
        raise CliError("split left no test samples")
    cfg = KnnConfig(args.k, args.selector, parallel=not args.sequential)
    res = evaluate(train, test, cfg)
    doc = {"k": args.k, "selector": args.selector, "split": args.split, "seed": args.seed,
           "train_size": len(train), "test_size": len(test)}
    doc.update(res.to_dict(data.label_table))
    with _Output(args.out, stdout) as out:
        out.write(json.dumps(doc) + "\n")


def cmd_bench(args, stdout):
    report = bench_selectors(args.sizes, args.ks, args.reps, args.seed, args.strategies,
                             parallel=not args.sequential)
    with _Output(args.out, stdout) as out:
        out.write(report.to_json() + "\n")


def cmd_classify(args, stdout):
    table = None
    if args.labels:
        with _open_in(args.labels) as fh:
            table = load_label_table(fh.read())
    train = _load_dataset(args.model, table)
    with _open_in(args.input) as fh:
        queries = read_feature_csv(fh)
    cfg = KnnConfig(args.k, args.selector, parallel=not args.sequential)
    with _Output(args.out, stdout) as out:
        for q in queries:
            t0 = time.perf_counter_ns()
            label = classify(train, q.features, cfg).label
            nanos = time.perf_counter_ns() - t0
            out.write(f"{q.device_id},{fmt_window_start(q.window_start)},{label.name},{nanos}\n")


COMMANDS = {
    "extract": cmd_extract,
    "synth": cmd_synth,
    "tune-k": cmd_tune_k,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "classify": cmd_classify,
}


def _setup_logging(stderr) -> None:
    level = LOG_LEVELS.get(os.environ.get("FLOWKNN_LOG", "warn").lower(), logging.WARNING)
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("flowknn: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    _setup_logging(stderr)
    try:
        # argparse reports usage errors on sys.stderr and exits 2
        old_out, old_err = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = stdout, stderr
        try:
            args = parser.parse_args(argv)
        finally:
            sys.stdout, sys.stderr = old_out, old_err
        _validate(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        stderr.write(f"flowknn {args.command}: error: {exc}\n")
        return 2
    try:
        COMMANDS[args.command](args, stdout)
    except (CliError, MalformedRowError) as exc:
        stderr.write(f"flowknn {args.command}: {exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        stderr.write(f"flowknn {args.command}: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())
