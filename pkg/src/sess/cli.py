"""Command-line entry point: ``sess simulate | fit | eval | bench``.

Every command writes ``manifest.json`` into its output directory before doing
any work. A manifest records the command, the resolved configuration and the
seeds, and can be passed back through ``--config`` to repeat the run.

Exit codes: 0 success, 2 unparseable input or configuration, 3 I/O error,
4 dimension mismatch, 5 engine failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (REPLICATE_COLUMNS, SUMMARY_COLUMNS, TIMING_COLUMNS, effective_threads,
                    expand_grid, format_table, replicate_rows, run_grid, summarize, to_csv)
from .criterion import EbicParams
from .engine import SessConfig, fit_raw
from .errors import DimensionMismatch, InvalidArgs, InvalidConfig, SessError
from .grouped import GroupSpec
from .io import (ParseError, atomic_write, format_triplets, read_groups, read_json,
                 read_matrix, read_triplets, write_groups, write_matrix)
from .metrics import CSV_COLUMNS, MetricsReport, evaluate, prediction_metrics
from .simgen import SimConfig, simulate

log = logging.getLogger("sess")

EXIT_PARSE, EXIT_IO, EXIT_MISMATCH, EXIT_ENGINE = 2, 3, 4, 5
FIT_KEYS = ("lambda1", "lambda2", "gamma", "fit_term", "rho", "threshold_rule",
            "threshold_multiplier", "max_entries")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- configuration -------------------------------------------------------------

def load_config(path) -> dict:
    """Read a JSON configuration; a previous run's manifest is accepted too."""
    if path is None:
        return {}
    doc = read_json(path)
    if "command" in doc and "config" in doc:
        return dict(doc["config"])
    return doc


def parse_rho(text: str) -> float | None:
    if text == "auto":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError("rho must be nonnegative")
    return value


def parse_split(text: str) -> dict:
    """``n0=K`` with an optional ``,seed=S``."""
    out = {}
    for part in text.replace(" ", ",").split(","):
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep or key not in ("n0", "seed"):
            raise argparse.ArgumentTypeError(f"bad split term {part!r}; expected n0=K[,seed=S]")
        try:
            out[key] = int(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"split {key} must be an integer") from None
    if "n0" not in out:
        raise argparse.ArgumentTypeError("split needs n0=K")
    return out


def fit_settings(doc: dict, args) -> dict:
    """Fit settings from a config section with command-line overrides."""
    unknown = set(doc) - set(FIT_KEYS)
    if unknown:
        raise CliError(f"unknown fit settings: {sorted(unknown)}", EXIT_PARSE)
    out = {"lambda1": 1.0, "lambda2": 1.0, "gamma": None, "fit_term": "pooled",
           "rho": None, "threshold_rule": "stderr", "threshold_multiplier": 1.0,
           "max_entries": None, **doc}
    for key in ("lambda1", "lambda2"):
        if getattr(args, key, None) is not None:
            out[key] = getattr(args, key)
    if hasattr(args, "rho"):
        out["rho"] = args.rho
    return out


def sess_config(settings: dict) -> SessConfig:
    try:
        return SessConfig(
            ebic=EbicParams(lambda1=float(settings["lambda1"]), lambda2=float(settings["lambda2"]),
                            gamma=settings["gamma"], fit_term=settings["fit_term"]),
            threshold_rho=settings["rho"],
            threshold_rule=settings["threshold_rule"],
            threshold_multiplier=float(settings["threshold_multiplier"]),
            max_entries=settings["max_entries"],
        )
    except (InvalidArgs, InvalidConfig, TypeError, ValueError) as exc:
        raise CliError(f"invalid fit settings: {exc}", EXIT_PARSE) from None


def sim_config(doc: dict, seed: int | None) -> SimConfig:
    fields = {f.name for f in dataclasses.fields(SimConfig)}
    unknown = set(doc) - fields
    if unknown:
        raise CliError(f"unknown simulation settings: {sorted(unknown)}", EXIT_PARSE)
    if seed is not None:
        doc = {**doc, "seed": seed}
    try:
        return SimConfig(**doc)
    except (InvalidArgs, TypeError) as exc:
        raise CliError(f"invalid simulation settings: {exc}", EXIT_PARSE) from None


def write_manifest(out: Path, command: str, config: dict, seeds, artifacts: list[str]) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seeds": seeds,
        "artifacts": artifacts,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_data(args) -> tuple[np.ndarray, np.ndarray, GroupSpec]:
    x = read_matrix(args.x)
    y = read_matrix(args.y)
    groups = read_groups(args.groups)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has {x.shape[0]} rows, Y has {y.shape[0]}")
    return x, y, groups


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = sim_config(load_config(args.config), args.seed)
    out = Path(args.out)
    artifacts = ["X.csv", "Y.csv", "B_true.csv", "groups.json"]
    write_manifest(out, "simulate", dataclasses.asdict(cfg), {"seed": cfg.seed}, artifacts)
    data = simulate(cfg)
    write_matrix(out / "X.csv", data.x, "x")
    write_matrix(out / "Y.csv", data.y, "y")
    write_matrix(out / "B_true.csv", data.b_true, "y")
    write_groups(out / "groups.json", data.groups)
    log.info("simulated n=%d p=%d q=%d into %s", cfg.n, cfg.p, cfg.q, out)
    return 0


def cmd_fit(args) -> int:
    doc = {k: v for k, v in load_config(args.config).items() if k not in ("x", "y", "groups")}
    settings = fit_settings(doc, args)
    config = sess_config(settings)
    out = Path(args.out)
    write_manifest(out, "fit", {**settings, "x": str(args.x), "y": str(args.y),
                                "groups": str(args.groups)},
                   {}, ["estimate.csv", "intercept.csv", "trace.jsonl"])
    x, y, groups = _read_data(args)
    result = fit_raw(x, y, groups, config)
    atomic_write(out / "estimate.csv", format_triplets(result.coef))
    write_matrix(out / "intercept.csv", result.intercept[None, :], "y")
    atomic_write(out / "trace.jsonl", result.trace.to_jsonl())
    log.info("selected %d entries, %d after thresholding",
             len(result.selected.selected), result.nne)
    return 0


def split_rows(n: int, n0: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Random training rows (sorted, size n0) and the remaining test rows."""
    if not 2 <= n0 < n:
        raise CliError(f"split n0={n0} must lie in [2, {n - 1}] for {n} rows", EXIT_MISMATCH)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n0]), np.sort(perm[n0:])


def eval_report(args) -> MetricsReport:
    truth = read_matrix(args.truth) if args.truth else None
    groups = read_groups(args.groups)
    shape = (groups.n_predictors, groups.n_responses)
    if truth is not None and truth.shape != shape:
        raise DimensionMismatch(f"B_true is {truth.shape}, groups describe {shape}")

    x = y = None
    if args.x or args.y:
        if not (args.x and args.y):
            raise CliError("--x and --y must be given together", EXIT_PARSE)
        x, y, _ = _read_data(args)
        if (x.shape[1], y.shape[1]) != shape:
            raise DimensionMismatch(f"data is {x.shape[1]}x{y.shape[1]}, groups describe {shape}")

    mse = mspe = None
    elapsed = 0.0
    if args.split is not None:
        if x is None:
            raise CliError("--split needs --x and --y", EXIT_PARSE)
        seed = args.split.get("seed", args.seed if args.seed is not None else 0)
        train, test = split_rows(x.shape[0], args.split["n0"], seed)
        config = sess_config(fit_settings(load_config(args.config), args))
        t0 = time.perf_counter()
        result = fit_raw(x[train], y[train], groups, config)
        elapsed = time.perf_counter() - t0
        coef = result.coef
        mse, mspe, _ = prediction_metrics(coef, result.intercept, x[train], y[train],
                                          x[test], y[test])
    else:
        if not args.estimate:
            raise CliError("eval needs --estimate or --split", EXIT_PARSE)
        coef = read_triplets(args.estimate, shape)
        if x is not None:
            intercept = y.mean(axis=0) - x.mean(axis=0) @ coef
            mse, _, _ = prediction_metrics(coef, intercept, x, y)

    if truth is not None:
        report = evaluate(coef, truth, groups, elapsed)
    else:
        report = MetricsReport(nne=int(np.count_nonzero(coef)), time_s=elapsed)
    report.mse, report.mspe = mse, mspe
    return report


def cmd_eval(args) -> int:
    report = eval_report(args)
    text = to_csv([report.row()], CSV_COLUMNS)
    if args.out:
        atomic_write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args) -> int:
    doc = load_config(args.config)
    fit_doc = doc.pop("fit", {})
    reps = int(doc.pop("reps", 1))
    base_seed = int(doc.pop("seed", 0))
    reps = args.reps if args.reps is not None else reps
    base_seed = args.seed if args.seed is not None else base_seed
    if reps < 1:
        raise CliError("reps must be at least 1", EXIT_PARSE)
    try:
        cells = expand_grid(doc)
    except (InvalidArgs, TypeError, ValueError) as exc:
        raise CliError(f"invalid grid: {exc}", EXIT_PARSE) from None
    settings = fit_settings(fit_doc, args)
    config = sess_config(settings)
    threads = effective_threads(args.threads)

    out = Path(args.out)
    snapshot = {**doc, "reps": reps, "seed": base_seed, "fit": settings}
    seeds = {"base_seed": base_seed, "replicate_seeds": [base_seed + r for r in range(reps)]}
    write_manifest(out, "bench", snapshot, seeds,
                   ["summary.csv", "timing.csv", "replicates.csv", "table.txt"])
    log.info("bench: %d cells x %d reps on %d threads", len(cells), reps, threads)

    results = run_grid(cells, reps, base_seed, config, threads)
    rows = summarize(cells, results)
    atomic_write(out / "summary.csv", to_csv(rows, SUMMARY_COLUMNS))
    atomic_write(out / "timing.csv", to_csv(rows, TIMING_COLUMNS))
    atomic_write(out / "replicates.csv", to_csv(replicate_rows(results), REPLICATE_COLUMNS))
    atomic_write(out / "table.txt", format_table(rows))
    for r in results:
        if r.error:
            log.warning("cell %d rep %d failed: %s", r.cell, r.rep, r.error)
    if all(r.error for r in results):
        raise CliError("every replicate failed", EXIT_ENGINE)
    return 0


# -- argument parsing ---------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sess", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def fit_flags(p):
        p.add_argument("--lambda1", type=float, help="weight of the model-size penalty")
        p.add_argument("--lambda2", type=float, help="weight of the combinatorial penalty")
        p.add_argument("--rho", type=parse_rho, default=argparse.SUPPRESS,
                       help="coefficient threshold in original units, or 'auto'")

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON simulation settings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit on CSV data")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--groups", required=True, help="JSON group file")
    p.add_argument("--config", help="JSON fit settings")
    p.add_argument("--out", required=True, help="output directory")
    fit_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="score an estimate, or fit and score on a split")
    p.add_argument("--estimate", help="triplet CSV written by 'fit'")
    p.add_argument("--truth", help="true coefficient matrix CSV")
    p.add_argument("--groups", required=True)
    p.add_argument("--x")
    p.add_argument("--y")
    p.add_argument("--split", type=parse_split, help="n0=K[,seed=S]: fit on K random rows")
    p.add_argument("--seed", type=int, help="split seed when not given in --split")
    p.add_argument("--config", help="JSON fit settings used with --split")
    p.add_argument("--out", help="metrics CSV path (default: stdout)")
    fit_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="replicated simulation grid")
    p.add_argument("--config", required=True, help="JSON grid file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=int, help="base seed; replicate r uses seed + r")
    p.add_argument("--threads", type=int, default=1)
    fit_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad usage
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except CliError as exc:
        code, msg = exc.code, str(exc)
    except ParseError as exc:
        code, msg = EXIT_PARSE, str(exc)
    except (DimensionMismatch, IndexError) as exc:
        code, msg = EXIT_MISMATCH, str(exc)
    except OSError as exc:
        code, msg = EXIT_IO, f"{exc.filename or ''}: {exc.strerror or exc}"
    except SessError as exc:
        code, msg = EXIT_ENGINE, f"{type(exc).__name__}: {exc}"
    print(f"sess: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
