"""Support-recovery, estimation-error and prediction metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DimensionMismatch
from .grouped import GroupSpec

CSV_COLUMNS = ("method", "sparsity", "pdr", "fdr", "dr", "bdr", "l1", "l2",
               "mse", "mspe", "nne", "time_s")


def _pair(b_hat, b_true):
    a = np.asarray(b_hat, dtype=float)
    b = np.asarray(b_true, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"estimate shape {a.shape} != truth shape {b.shape}")
    return a, b


def _rates(est: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    n_true = int(truth.sum())
    n_est = int(est.sum())
    hits = int((est & truth).sum())
    pdr = hits / n_true if n_true else 1.0
    fdr = (n_est - hits) / n_est if n_est else 0.0
    return pdr, fdr, pdr + 1.0 - fdr


def support_metrics(b_hat, b_true) -> tuple[float, float, float]:
    """Entry-level (PDR, FDR, DR).

    PDR is 1 when the true support is empty; FDR is 0 when the estimated
    support is empty.
    """
    a, b = _pair(b_hat, b_true)
    return _rates(a != 0, b != 0)


def block_support(b, groups: GroupSpec) -> np.ndarray:
    """Boolean (K, J) matrix: does block (k, j) hold a nonzero entry?"""
    nz = np.asarray(b) != 0
    out = np.zeros((groups.K, groups.J), dtype=bool)
    for k, rows in enumerate(groups.predictor_groups):
        sub = nz[list(rows)]
        for j, cols in enumerate(groups.response_groups):
            out[k, j] = bool(sub[:, list(cols)].any())
    return out


def block_metrics(b_hat, b_true, groups: GroupSpec) -> float:
    """Block-level DR: a block counts once if it holds any nonzero entry."""
    a, b = _pair(b_hat, b_true)
    if a.shape != (groups.n_predictors, groups.n_responses):
        raise DimensionMismatch(f"matrix shape {a.shape} does not match the groups")
    return _rates(block_support(a, groups), block_support(b, groups))[2]


def error_norms(b_hat, b_true) -> tuple[float, float]:
    """Entrywise l1 and Frobenius norms of the estimation error."""
    a, b = _pair(b_hat, b_true)
    d = a - b
    return float(np.abs(d).sum()), float(np.sqrt((d * d).sum()))


def prediction_metrics(coef, intercept, x_train, y_train, x_test=None, y_test=None):
    """(MSE on training rows, MSPE on test rows or None, NNE)."""
    b = np.asarray(coef, dtype=float)
    c = np.zeros(b.shape[1]) if intercept is None else np.asarray(intercept, dtype=float)

    def mean_sq(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 2 or x.shape[1] != b.shape[0] or y.shape != (x.shape[0], b.shape[1]):
            raise DimensionMismatch(f"x {x.shape} / y {y.shape} do not match coef {b.shape}")
        r = y - x @ b - c
        return float(np.mean(r * r))

    mse = mean_sq(x_train, y_train)
    mspe = mean_sq(x_test, y_test) if x_test is not None else None
    return mse, mspe, int(np.count_nonzero(b))


@dataclass
class MetricsReport:
    pdr: float = math.nan
    fdr: float = math.nan
    dr: float = math.nan
    bdr: float = math.nan
    l1: float = math.nan
    l2: float = math.nan
    nne: int = 0
    mse: float | None = None
    mspe: float | None = None
    time_s: float = 0.0
    method: str = "SeSS"
    sparsity: float | None = None

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


def evaluate(b_hat, b_true, groups: GroupSpec, time_s: float = 0.0, **extra) -> MetricsReport:
    pdr, fdr, dr = support_metrics(b_hat, b_true)
    l1, l2 = error_norms(b_hat, b_true)
    return MetricsReport(pdr=pdr, fdr=fdr, dr=dr, bdr=block_metrics(b_hat, b_true, groups),
                         l1=l1, l2=l2, nne=int(np.count_nonzero(b_hat)), time_s=time_s,
                         **extra)
