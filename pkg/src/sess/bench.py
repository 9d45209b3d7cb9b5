"""Replicated simulate -> fit -> evaluate runs over a grid of settings."""

from __future__ import annotations

import itertools
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import SessConfig, check_trace, fit_raw
from .metrics import MetricsReport, evaluate
from .simgen import SimConfig, simulate

SINGLE_THREAD_ENV = "SESS_SINGLE_THREAD"
SUMMARY_METRICS = ("pdr", "fdr", "dr", "bdr", "l1", "l2", "nne")
CELL_KEYS = ("n", "p", "q", "group_scheme", "sparsity")


@dataclass
class ReplicateResult:
    cell: int
    rep: int
    seed: int
    report: MetricsReport | None
    trace_problems: list[str] = field(default_factory=list)
    error: str | None = None


def expand_grid(doc: dict) -> list[SimConfig]:
    """Cells from either an explicit ``cells`` list or a product of axes.

    The product form uses ``dims`` (list of ``[n, p, q]``), ``schemes`` and
    ``sparsities``.
    """
    extra = {k: doc[k] for k in ("ar_rho", "group_size") if k in doc}
    if "cells" in doc:
        return [SimConfig(**{**extra, **cell}) for cell in doc["cells"]]
    dims = doc.get("dims", [[150, 200, 200]])
    schemes = doc.get("schemes", ["equal"])
    sparsities = doc.get("sparsities", [0.95])
    return [SimConfig(n=n, p=p, q=q, group_scheme=s, sparsity=sp, **extra)
            for (n, p, q), s, sp in itertools.product(dims, schemes, sparsities)]


def run_replicate(cell_index: int, cell: SimConfig, rep: int, base_seed: int,
                  config: SessConfig) -> ReplicateResult:
    seed = base_seed + rep
    try:
        data = simulate(replace(cell, seed=seed))
        t0 = time.perf_counter()
        result = fit_raw(data.x, data.y, data.groups, config)
        elapsed = time.perf_counter() - t0
        report = evaluate(result.coef, data.b_true, data.groups, elapsed,
                          sparsity=cell.sparsity)
        return ReplicateResult(cell_index, rep, seed, report,
                               check_trace(result.trace, data.groups))
    except Exception as exc:  # recorded per replicate, the cell is marked incomplete
        return ReplicateResult(cell_index, rep, seed, None, error=f"{type(exc).__name__}: {exc}")


def effective_threads(threads: int) -> int:
    if os.environ.get(SINGLE_THREAD_ENV, "").strip() not in ("", "0"):
        return 1
    return max(1, int(threads))


def run_grid(cells: list[SimConfig], reps: int, base_seed: int, config: SessConfig,
             threads: int = 1) -> list[ReplicateResult]:
    """All replicates, ordered by (cell, replicate) regardless of completion order."""
    jobs = [(ci, cell, r) for ci, cell in enumerate(cells) for r in range(reps)]
    threads = effective_threads(threads)
    if threads == 1:
        return [run_replicate(ci, cell, r, base_seed, config) for ci, cell, r in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(run_replicate, ci, cell, r, base_seed, config)
                   for ci, cell, r in jobs]
        results = [f.result() for f in futures]
    return sorted(results, key=lambda res: (res.cell, res.rep))


def _mean_sd(values: list[float]) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    sd = float(np.std(a, ddof=1)) if a.size > 1 else 0.0
    return float(np.mean(a)), sd


def summarize(cells: list[SimConfig], results: list[ReplicateResult]) -> list[dict]:
    rows = []
    for ci, cell in enumerate(cells):
        mine = [r for r in results if r.cell == ci]
        ok = [r for r in mine if r.report is not None]
        row = {key: getattr(cell, key) for key in CELL_KEYS}
        row["method"] = "SeSS"
        row["reps"] = len(mine)
        row["failed"] = len(mine) - len(ok)
        row["complete"] = int(row["failed"] == 0)
        row["trace_ok"] = int(all(not r.trace_problems for r in ok))
        for key in SUMMARY_METRICS:
            row[f"{key}_mean"], row[f"{key}_sd"] = _mean_sd([getattr(r.report, key) for r in ok])
        row["time_mean"], row["time_sd"] = _mean_sd([r.report.time_s for r in ok])
        rows.append(row)
    return rows


SUMMARY_COLUMNS = (["method", *CELL_KEYS, "reps", "failed", "complete", "trace_ok"]
                   + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "sd")])
TIMING_COLUMNS = ("method", *CELL_KEYS, "time_mean", "time_sd")
REPLICATE_COLUMNS = ("cell", "rep", "seed", "method", "sparsity", "pdr", "fdr", "dr", "bdr",
                     "l1", "l2", "mse", "mspe", "nne", "time_s", "trace_ok", "error")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if np.isnan(v) else f"{v:.6f}"
    return str(v)


def to_csv(rows: list[dict], columns) -> str:
    lines = [",".join(columns)]
    lines += [",".join(_cell(row.get(c)) for c in columns) for row in rows]
    return "\n".join(lines) + "\n"


def replicate_rows(results: list[ReplicateResult]) -> list[dict]:
    rows = []
    for r in results:
        row = {"cell": r.cell, "rep": r.rep, "seed": r.seed,
               "trace_ok": int(not r.trace_problems), "error": r.error or ""}
        if r.report is not None:
            row.update(r.report.row())
        rows.append(row)
    return rows


def format_table(rows: list[dict]) -> str:
    """Aligned text table in the order PDR, FDR, DR, BDR, L1, L2, time."""
    header = ["Method", "Scheme", "n", "q", "p", "Sparsity", "PDR", "FDR", "DR", "BDR",
              "L1", "L2", "time"]
    body = []
    for row in rows:
        def ms(key, digits=3):
            return f"{row[f'{key}_mean']:.{digits}f}({row[f'{key}_sd']:.{digits}f})"
        body.append([row["method"], row["group_scheme"], str(row["n"]), str(row["q"]),
                     str(row["p"]), f"{row['sparsity']:g}", ms("pdr"), ms("fdr"), ms("dr"),
                     ms("bdr"), ms("l1"), ms("l2"), ms("time")])
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in [header, *body]]
    return "\n".join(lines) + "\n"
