"""Canonical-correlation screening of predictor groups against residual blocks.

The score between two column sets A and B is the trace of
``(A'A)^+ A'B (B'B)^+ B'A``, i.e. the sum of squared sample canonical
correlations between the two sets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AllBlocksExcluded, DimensionMismatch, ZeroColumn
from .grouped import ExpandedDataset
from .numerics import _as_2d, regularized_gram_inverse


@dataclass(frozen=True)
class CCScore:
    value: float
    k: int
    j: int
    row: int | None = None


def _trace_form(gx_inv: np.ndarray, cross: np.ndarray, gy_inv: np.ndarray) -> float:
    # tr(Gx+ C Gy+ C') without forming the product matrix
    return float(np.sum((gx_inv @ cross) * (cross @ gy_inv)))


def cc_trace(x_block, y_resid) -> float:
    """Sum of squared canonical correlations between two column sets."""
    x = _as_2d(x_block)
    y = _as_2d(y_resid)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    return _trace_form(regularized_gram_inverse(x), x.T @ y, regularized_gram_inverse(y))


def _row_score(x: np.ndarray, y: np.ndarray, gy_inv: np.ndarray) -> float:
    xx = float(x @ x)
    if xx == 0.0:
        raise ZeroColumn("predictor column is identically zero")
    c = x @ y
    return float(c @ gy_inv @ c) / xx


def row_cc(x_col, y_resid) -> float:
    """Squared multiple correlation of one column with a residual block."""
    x = _as_2d(x_col)
    y = _as_2d(y_resid)
    if x.shape[1] != 1:
        raise DimensionMismatch(f"expected a single column, got {x.shape[1]}")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    return _row_score(x[:, 0], y, regularized_gram_inverse(y))


class BlockScorer:
    """Cached block and row scores for a fixed design and changing residuals.

    Predictor Gram inverses are computed once. Residual Gram inverses are
    recomputed lazily after :meth:`set_residual`.
    """

    def __init__(self, data: ExpandedDataset, residuals: Sequence[np.ndarray]):
        self.data = data
        self._gx = [regularized_gram_inverse(data.x_block(k)) for k in range(data.groups.K)]
        self._resid = list(residuals)
        self._gy: list[np.ndarray | None] = [None] * data.groups.J

    def set_residual(self, j: int, resid: np.ndarray) -> None:
        self._resid[j] = resid
        self._gy[j] = None

    def _gy_inv(self, j: int) -> np.ndarray:
        if self._gy[j] is None:
            self._gy[j] = regularized_gram_inverse(self._resid[j])
        return self._gy[j]

    def block_score(self, k: int, j: int) -> float:
        xk = self.data.x_block(k)
        return _trace_form(self._gx[k], xk.T @ self._resid[j], self._gy_inv(j))

    def best_block(self, excluded: Iterable[tuple[int, int]] = ()) -> CCScore:
        """Highest-scoring block not in ``excluded``; ties go to smallest (k, j)."""
        excluded = set(excluded)
        best = None
        for k in range(self.data.groups.K):
            for j in range(self.data.groups.J):
                if (k, j) in excluded:
                    continue
                v = self.block_score(k, j)
                if best is None or v > best.value:
                    best = CCScore(v, k, j)
        if best is None:
            raise AllBlocksExcluded("every block has been closed")
        return best

    def best_row(self, k: int, j: int, skip: Iterable[int] = ()) -> CCScore | None:
        """Highest-scoring row of block (k, j) not in ``skip``; None if none left."""
        skip = set(skip)
        xk = self.data.x_block(k)
        gy = self._gy_inv(j)
        best = None
        for a in range(xk.shape[1]):
            if a in skip:
                continue
            v = _row_score(xk[:, a], self._resid[j], gy)
            if best is None or v > best.value:
                best = CCScore(v, k, j, a)
        return best


def score_all_blocks(data: ExpandedDataset, residuals: Sequence[np.ndarray],
                     excluded: Iterable[tuple[int, int]] = ()) -> CCScore:
    """Best block for the given per-group residual matrices."""
    return BlockScorer(data, residuals).best_block(excluded)
