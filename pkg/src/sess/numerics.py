"""Dense linear-algebra helpers shared by the screening and selection code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConstantColumn, DimensionMismatch, InvalidArgs

# Relative spectral cutoff for pseudo-inverses and rank decisions.
RCOND = 1e-10


@dataclass(frozen=True)
class Scaling:
    """Centering and scaling applied by :func:`standardize_columns`."""

    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True)
class LstSqSolution:
    coefficients: np.ndarray
    residuals: np.ndarray
    rank: int


def _as_2d(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got array with ndim={a.ndim}")
    return a


def standardize_columns(m, *, return_scaling: bool = False):
    """Center every column and scale it so its sum of squares equals ``n``.

    Parameters
    ----------
    m : array_like, shape (n, d)
    return_scaling : bool
        Also return the :class:`Scaling` needed to map fitted coefficients
        back to the original units.

    Raises
    ------
    ConstantColumn
        If a column has zero sample variance.
    """
    a = _as_2d(m)
    n = a.shape[0]
    if n < 2:
        raise InvalidArgs("standardization needs at least two rows")
    mean = a.mean(axis=0)
    centered = a - mean
    scale = np.sqrt((centered**2).sum(axis=0) / n)
    tol = 1e-12 * np.maximum(1.0, np.abs(mean))
    bad = np.flatnonzero(scale <= tol)
    if bad.size:
        raise ConstantColumn(int(bad[0]))
    out = centered / scale
    if return_scaling:
        return out, Scaling(mean=mean, scale=scale)
    return out


def least_squares(design, rhs) -> LstSqSolution:
    """Minimum-norm least-squares solution of ``design @ B ~ rhs``.

    Singular values below ``sigma_max * 1e-10`` are discarded, so duplicated or
    collinear design columns yield the minimum-norm coefficients.
    """
    x = _as_2d(design)
    y = _as_2d(rhs)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"design has {x.shape[0]} rows but rhs has {y.shape[0]}"
        )
    if x.shape[1] == 0:
        return LstSqSolution(np.zeros((0, y.shape[1])), y.copy(), 0)
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=RCOND)
    resid = y - x @ coef
    return LstSqSolution(coef, resid, int(rank))


def regularized_gram_inverse(m) -> np.ndarray:
    """Pseudo-inverse of ``m.T @ m`` with a relative eigenvalue cutoff."""
    a = _as_2d(m)
    gram = a.T @ a
    return np.linalg.pinv(gram, rcond=RCOND, hermitian=True)


def log_binomial(n: int, k: int) -> float:
    """``ln(n choose k)`` via log-gamma."""
    if k < 0 or n < 0 or k > n:
        raise InvalidArgs(f"log_binomial needs 0 <= k <= n, got n={n}, k={k}")
    k = min(k, n - k)
    if k == 0:
        return 0.0
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))
