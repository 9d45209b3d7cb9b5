"""Extended BIC over block-structured multiresponse models."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .errors import InvalidArgs, Overcapacity, PerfectFit
from .grouped import BlockCoordinate, ExpandedDataset, GroupSpec, to_flat
from .numerics import least_squares, log_binomial

# residual sums of squares at or below this fraction of n count as a perfect fit
PERFECT_FIT_RATIO = 1e-12
FIT_TERMS = ("group", "pooled", "response")


def derive_gamma(n: int, p: int) -> float:
    """``1 - ln(n) / (2 ln(p))``; may be negative when p is small relative to n."""
    if n < 2 or p < 2:
        raise InvalidArgs(f"derive_gamma needs n >= 2 and p >= 2, got n={n}, p={p}")
    return 1.0 - math.log(n) / (2.0 * math.log(p))


@dataclass(frozen=True)
class EbicParams:
    lambda1: float = 1.0
    lambda2: float = 1.0
    gamma: float | None = None  # None: derive from (n, p)
    fit_term: str = "pooled"

    def __post_init__(self):
        if not (self.lambda1 >= 0 and self.lambda2 >= 0):
            raise InvalidArgs("lambda1 and lambda2 must be nonnegative")
        if self.gamma is not None and not math.isfinite(self.gamma):
            raise InvalidArgs("gamma must be finite")
        if self.gamma is not None and not 0.0 <= self.gamma <= 1.0:
            raise InvalidArgs("gamma must lie in [0, 1]")
        if self.fit_term not in FIT_TERMS:
            raise InvalidArgs(f"fit_term must be one of {FIT_TERMS}")

    def resolve_gamma(self, n: int, p: int) -> float:
        """Explicit gamma, or the derived value clipped to [0, 1].

        A single predictor column leaves the derived value undefined; 0 is used.
        """
        if self.gamma is not None:
            return float(self.gamma)
        if p < 2:
            return 0.0
        return min(max(derive_gamma(n, p), 0.0), 1.0)


@dataclass(frozen=True)
class ModelState:
    """A set of selected block entries."""

    selected: frozenset[BlockCoordinate] = frozenset()

    @classmethod
    def of(cls, coords: Iterable[BlockCoordinate]) -> "ModelState":
        return cls(frozenset(BlockCoordinate(*c) for c in coords))

    @property
    def block_counts(self) -> Counter:
        return Counter((c.k, c.j) for c in self.selected)

    @property
    def m(self) -> int:
        return len(self.block_counts)

    def with_entry(self, coord: BlockCoordinate) -> "ModelState":
        return ModelState(self.selected | {coord})


class EbicTerms(NamedTuple):
    fit: float
    size_penalty: float
    combinatorial_penalty: float

    @property
    def total(self) -> float:
        return self.fit + self.size_penalty + self.combinatorial_penalty


def fit_term(col_rss, n: int, groups: GroupSpec, kind: str = "pooled") -> float:
    """Goodness-of-fit part of the EBIC from per-column residual sums of squares.

    ``"group"``: ``n * sum_j ln(RSS_j / n)`` with ``RSS_j`` summed over the
    columns of response group j. ``"pooled"``: ``sum_j n q_j ln(RSS_j / (n q_j))``,
    the Gaussian deviance with one noise variance per group. ``"response"``:
    ``n * sum_l ln(RSS_l / n)`` over expanded response columns, one variance
    per column.
    """
    rss = np.asarray(col_rss, dtype=float)
    if kind == "response":
        if np.any(rss <= PERFECT_FIT_RATIO * n):
            raise PerfectFit(f"residual sum of squares vanished in column {int(np.argmin(rss))}")
        return n * float(np.sum(np.log(rss / n)))
    by_group = np.add.reduceat(rss, groups.y_offsets[:-1])
    if np.any(by_group <= PERFECT_FIT_RATIO * n):
        raise PerfectFit(f"residual sum of squares vanished in group {int(np.argmin(by_group))}")
    if kind == "group":
        return n * float(np.sum(np.log(by_group / n)))
    sizes = groups.y_sizes
    return float(np.sum(n * sizes * np.log(by_group / (n * sizes))))


def ebic_terms_from_parts(col_rss, n: int, block_counts: Mapping[tuple[int, int], int],
                          groups: GroupSpec, params: EbicParams, gamma: float) -> EbicTerms:
    """EBIC from per-column residual sums of squares and per-block entry counts."""
    fit = fit_term(col_rss, n, groups, params.fit_term)
    counts = {b: r for b, r in block_counts.items() if r > 0}
    total_r = sum(counts.values())
    size_pen = params.lambda1 * total_r * math.log(n)
    comb = log_binomial(groups.K * groups.J, len(counts))
    comb += sum(log_binomial(groups.block_size(k, j), r) for (k, j), r in counts.items())
    return EbicTerms(fit, size_pen, 2.0 * params.lambda2 * gamma * comb)


def column_supports(state: ModelState, data: ExpandedDataset) -> dict[int, list[int]]:
    """Expanded predictor rows selected for each expanded response column."""
    supports: dict[int, list[int]] = {}
    for coord in sorted(state.selected):
        r, c = to_flat(coord, data.groups)
        supports.setdefault(c, []).append(r)
    return supports


def column_rss(state: ModelState, data: ExpandedDataset) -> np.ndarray:
    """Residual sum of squares of each expanded response column after refitting."""
    n = data.n
    col_rss = np.sum(data.y**2, axis=0)
    for c, rows in column_supports(state, data).items():
        if len(rows) >= n:
            raise Overcapacity(f"response column {c} has {len(rows)} predictors for n={n}")
        sol = least_squares(data.x[:, rows], data.y[:, c])
        col_rss[c] = float(sol.residuals[:, 0] @ sol.residuals[:, 0])
    return col_rss


def ebic_terms(state: ModelState, data: ExpandedDataset, params: EbicParams) -> EbicTerms:
    gamma = params.resolve_gamma(data.n, data.p)
    return ebic_terms_from_parts(column_rss(state, data), data.n, state.block_counts,
                                 data.groups, params, gamma)


def ebic(state: ModelState, data: ExpandedDataset, params: EbicParams) -> float:
    """Extended BIC of ``state``, refitting least squares on its support."""
    return ebic_terms(state, data, params).total
