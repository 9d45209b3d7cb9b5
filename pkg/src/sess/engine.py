"""Sequential stepwise screening driver.

Selection runs three nested loops:

* pick the open coefficient block with the largest canonical-correlation
  score against the current residuals;
* inside it, pick the unused row (predictor) best correlated with the
  residuals of the block's response group;
* greedily add entries of that row while the extended BIC strictly drops.

A row that yields entries is retired and the next row of the same block is
tried. A row that yields nothing ends the block: the block is closed if it
produced anything, otherwise selection stops. The selected support is then
refit by least squares per original response and small coefficients are
thresholded away.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from .criterion import EbicParams, ModelState, ebic_terms_from_parts
from .errors import AllBlocksExcluded, DimensionMismatch, InvalidConfig, PerfectFit
from .grouped import BlockCoordinate, ExpandedDataset, GroupSpec, prepare
from .numerics import least_squares, regularized_gram_inverse
from .screening import BlockScorer

THRESHOLD_RULES = ("stderr", "spread")


@dataclass(frozen=True)
class SessConfig:
    """Tuning for :func:`fit`.

    Parameters
    ----------
    ebic : EbicParams
    threshold_rho : float, optional
        Fixed threshold on coefficient magnitude (original units). When None
        the threshold is derived with ``threshold_rule``.
    threshold_rule : {"stderr", "spread"}
        ``"stderr"`` drops an entry when ``|beta| < se(beta) * sqrt(2 ln p)``
        using its least-squares standard error. ``"spread"`` uses one
        threshold ``sd(beta_hat) * sqrt(2 ln p)`` from the spread of all
        fitted values (see :func:`derive_threshold`).
    threshold_multiplier : float
        Scales the derived threshold.
    max_entries : int, optional
        Cap on selected predictors per expanded response column. Defaults
        to ``n - 1``.
    """

    ebic: EbicParams = field(default_factory=EbicParams)
    threshold_rho: float | None = None
    threshold_rule: str = "stderr"
    threshold_multiplier: float = 1.0
    max_entries: int | None = None

    def __post_init__(self):
        if self.threshold_rho is not None and not self.threshold_rho >= 0:
            raise InvalidConfig("threshold_rho must be nonnegative")
        if self.threshold_rule not in THRESHOLD_RULES:
            raise InvalidConfig(f"threshold_rule must be one of {THRESHOLD_RULES}")
        if not self.threshold_multiplier >= 0:
            raise InvalidConfig("threshold_multiplier must be nonnegative")
        if self.max_entries is not None and self.max_entries < 1:
            raise InvalidConfig("max_entries must be at least 1")


# -- selection trace ---------------------------------------------------------

@dataclass(frozen=True)
class BlockChosen:
    k: int
    j: int
    score: float


@dataclass(frozen=True)
class RowChosen:
    k: int
    j: int
    row: int
    score: float


@dataclass(frozen=True)
class EntryAccepted:
    coord: BlockCoordinate
    ebic_before: float
    ebic_after: float


@dataclass(frozen=True)
class RowAbandoned:
    k: int
    j: int
    row: int


@dataclass(frozen=True)
class RowExhausted:
    k: int
    j: int
    row: int


@dataclass(frozen=True)
class BlockClosed:
    k: int
    j: int


@dataclass(frozen=True)
class Terminated:
    reason: str


class SelectionTrace(list):
    """Ordered list of selection events."""

    def entries(self) -> list[EntryAccepted]:
        return [e for e in self if isinstance(e, EntryAccepted)]

    def to_jsonl(self) -> str:
        lines = []
        for e in self:
            rec = {"event": type(e).__name__, **asdict(e)}
            if isinstance(e, EntryAccepted):
                rec["coord"] = list(e.coord)
            lines.append(json.dumps(rec, sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")


def check_trace(trace: SelectionTrace, groups: GroupSpec) -> list[str]:
    """Return a list of violated trace invariants (empty when the trace is valid)."""
    problems = []
    closed: set[tuple[int, int]] = set()
    retired: dict[tuple[int, int], set[int]] = {}
    block = row = None
    n_entries = 0
    terminated = False
    for i, e in enumerate(trace):
        if terminated:
            problems.append(f"event {i} after termination")
        if isinstance(e, BlockChosen):
            if row is not None:
                problems.append(f"event {i}: block chosen while row {row} open")
            if block is not None:
                problems.append(f"event {i}: block chosen while block {block} open")
            if (e.k, e.j) in closed:
                problems.append(f"event {i}: closed block {(e.k, e.j)} chosen again")
            block = (e.k, e.j)
        elif isinstance(e, RowChosen):
            if block != (e.k, e.j) or row is not None:
                problems.append(f"event {i}: row chosen outside its block")
            if e.row in retired.get((e.k, e.j), set()):
                problems.append(f"event {i}: retired row {e.row} chosen again")
            row = e.row
        elif isinstance(e, EntryAccepted):
            c = e.coord
            if block != (c.k, c.j) or row != c.row:
                problems.append(f"event {i}: entry {tuple(c)} outside the open row")
            if not e.ebic_after < e.ebic_before:
                problems.append(f"event {i}: EBIC did not decrease")
            n_entries += 1
        elif isinstance(e, RowExhausted):
            if row != e.row or block != (e.k, e.j):
                problems.append(f"event {i}: retiring a row that is not open")
            retired.setdefault((e.k, e.j), set()).add(e.row)
            row = None
        elif isinstance(e, RowAbandoned):
            if row != e.row or block != (e.k, e.j):
                problems.append(f"event {i}: abandoning a row that is not open")
            row = None
        elif isinstance(e, BlockClosed):
            if block != (e.k, e.j) or row is not None:
                problems.append(f"event {i}: closing a block that is not open")
            closed.add((e.k, e.j))
            block = None
        elif isinstance(e, Terminated):
            terminated = True
    if not terminated:
        problems.append("trace does not end with termination")
    bound = sum(groups.block_size(k, j) for k in range(groups.K) for j in range(groups.J))
    if n_entries > bound:
        problems.append(f"{n_entries} entries accepted, bound is {bound}")
    return problems


# -- fitted model --------------------------------------------------------------

@dataclass
class FitResult:
    """Output of :func:`fit`.

    ``coef`` and ``intercept`` are in the original column space and units.
    ``selected`` is the support chosen by the screening stage in expanded
    block coordinates, before refitting and thresholding.
    """

    coef: np.ndarray
    intercept: np.ndarray
    selected: ModelState
    trace: SelectionTrace
    coef_unthresholded: np.ndarray
    thresholds: np.ndarray
    ebic: float

    @property
    def support(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.coef)
        return list(zip(rows.tolist(), cols.tolist()))

    @property
    def nne(self) -> int:
        return int(np.count_nonzero(self.coef))

    def predict(self, x_new) -> np.ndarray:
        return predict(self.coef, x_new, self.intercept)


def predict(coef, x_new, intercept=None) -> np.ndarray:
    """``x_new @ coef (+ intercept)`` in original coordinates."""
    b = np.asarray(coef, dtype=float)
    x = np.asarray(x_new, dtype=float)
    if x.ndim != 2 or x.shape[1] != b.shape[0]:
        raise DimensionMismatch(
            f"x_new has shape {x.shape}, estimate expects {b.shape[0]} predictors"
        )
    out = x @ b
    if intercept is not None:
        out = out + np.asarray(intercept, dtype=float)
    return out


def derive_threshold(values, p: int, multiplier: float = 1.0) -> float:
    """``multiplier * sd(values) * sqrt(2 ln p)``; 0 for fewer than two values."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        return 0.0
    return float(multiplier * np.std(v, ddof=1) * math.sqrt(2.0 * math.log(p)))


# -- the selection state machine -------------------------------------------------

class _Selector:
    def __init__(self, data: ExpandedDataset, config: SessConfig):
        self.data = data
        self.config = config
        self.groups = data.groups
        self.n = data.n
        if self.n < 2:
            raise InvalidConfig("need at least two observations")
        self.gamma = config.ebic.resolve_gamma(data.n, data.p)
        self.cap = config.max_entries if config.max_entries is not None else self.n - 1
        self.xo = data.groups.x_offsets
        self.yo = data.groups.y_offsets
        self.resid = data.y.copy()
        self.col_rss = np.einsum("ij,ij->j", data.y, data.y)
        self.supports: dict[int, list[int]] = {}
        self.counts: Counter = Counter()
        self.selected: list[BlockCoordinate] = []
        self.scorer = BlockScorer(data, [data.y_block(j) for j in range(self.groups.J)])
        self.trace = SelectionTrace()
        self.current = self._ebic(self.col_rss, self.counts)

    def _ebic(self, col_rss, counts) -> float:
        return ebic_terms_from_parts(col_rss, self.n, counts, self.groups,
                                     self.config.ebic, self.gamma).total

    def _refit(self, c: int, rows: list[int]):
        sol = least_squares(self.data.x[:, rows], self.data.y[:, c])
        r = sol.residuals[:, 0]
        return float(r @ r), r

    def _scan_row(self, k: int, j: int, a: int) -> int:
        """Greedy entry selection along row ``a`` of block (k, j)."""
        r = int(self.xo[k] + a)
        candidates = list(range(len(self.groups.response_groups[j])))
        accepted = 0
        while candidates:
            counts = self.counts.copy()
            counts[(k, j)] += 1
            best = None
            for m in candidates:
                c = int(self.yo[j] + m)
                rows = self.supports.get(c, [])
                if len(rows) >= self.cap:
                    continue
                new_rss, resid = self._refit(c, rows + [r])
                rss = self.col_rss.copy()
                rss[c] = new_rss
                try:
                    value = self._ebic(rss, counts)
                except PerfectFit:
                    continue
                if best is None or value < best[0]:
                    best = (value, m, c, new_rss, resid)
            if best is None or not best[0] < self.current:
                break
            value, m, c, new_rss, resid = best
            coord = BlockCoordinate(k, j, a, m)
            self.trace.append(EntryAccepted(coord, self.current, value))
            self.current = value
            self.supports.setdefault(c, []).append(r)
            self.col_rss[c] = new_rss
            self.resid[:, c] = resid
            self.counts[(k, j)] += 1
            self.selected.append(coord)
            candidates.remove(m)
            accepted += 1
            self.scorer.set_residual(j, self.resid[:, self.yo[j]:self.yo[j + 1]])
        return accepted

    def run(self) -> None:
        closed: set[tuple[int, int]] = set()
        while True:
            try:
                blk = self.scorer.best_block(closed)
            except AllBlocksExcluded:
                self.trace.append(Terminated("all blocks closed"))
                return
            k, j = blk.k, blk.j
            self.trace.append(BlockChosen(k, j, blk.value))
            retired: set[int] = set()
            block_entries = 0
            while True:
                row = self.scorer.best_row(k, j, retired)
                if row is None:
                    break
                self.trace.append(RowChosen(k, j, row.row, row.value))
                got = self._scan_row(k, j, row.row)
                if got == 0:
                    self.trace.append(RowAbandoned(k, j, row.row))
                    break
                block_entries += got
                retired.add(row.row)
                self.trace.append(RowExhausted(k, j, row.row))
            if block_entries == 0:
                self.trace.append(Terminated("chosen block produced no entries"))
                return
            closed.add((k, j))
            self.trace.append(BlockClosed(k, j))


def _finalize(data: ExpandedDataset, selected: Iterable[BlockCoordinate], config: SessConfig):
    """Refit least squares per original response and threshold the result."""
    g = data.groups
    xo, yo = g.x_origin, g.y_origin
    p0, q0 = g.n_predictors, g.n_responses
    n = data.n
    support: dict[int, set[int]] = {}
    for c in selected:
        support.setdefault(int(yo[g.y_offsets[c.j] + c.col]), set()).add(
            int(xo[g.x_offsets[c.k] + c.row]))

    x_scale = data.x_scaling.scale if data.x_scaling is not None else np.ones(p0)
    y_scale = data.y_scaling.scale if data.y_scaling is not None else np.ones(q0)
    unit = y_scale[None, :] / x_scale[:, None]  # standardized -> original units

    beta_std = np.zeros((p0, q0))
    se_std = np.zeros((p0, q0))
    for l, preds in support.items():
        rows = sorted(preds)
        sol = least_squares(data.x_std[:, rows], data.y_std[:, l])
        beta_std[rows, l] = sol.coefficients[:, 0]
        df = max(n - sol.rank - 1, 1)
        sigma2 = float(sol.residuals[:, 0] @ sol.residuals[:, 0]) / df
        ginv = regularized_gram_inverse(data.x_std[:, rows])
        se_std[rows, l] = np.sqrt(np.maximum(sigma2 * np.diag(ginv), 0.0))

    beta = beta_std * unit
    mask = np.zeros((p0, q0), dtype=bool)
    for l, preds in support.items():
        mask[sorted(preds), l] = True
    thresholds = np.zeros((p0, q0))
    if config.threshold_rho is not None:
        thresholds[mask] = config.threshold_rho
    elif config.threshold_rule == "stderr":
        factor = config.threshold_multiplier * math.sqrt(2.0 * math.log(max(p0, 2)))
        thresholds = np.where(mask, se_std * unit * factor, 0.0)
    else:
        thresholds[mask] = derive_threshold(beta[mask], max(p0, 2),
                                            config.threshold_multiplier)
    keep = mask & (np.abs(beta) >= thresholds) & (beta != 0)
    final = np.where(keep, beta, 0.0)
    return final, np.where(mask, beta, 0.0), thresholds


def fit(data: ExpandedDataset, config: SessConfig | None = None) -> FitResult:
    """Run screening and selection on prepared data.

    Parameters
    ----------
    data : ExpandedDataset
        Standardized, group-expanded data from :func:`sess.grouped.prepare`.
    config : SessConfig, optional
    """
    config = config or SessConfig()
    sel = _Selector(data, config)
    sel.run()
    coef, raw, thresholds = _finalize(data, sel.selected, config)
    if data.x_scaling is not None and data.y_scaling is not None:
        intercept = data.y_scaling.mean - data.x_scaling.mean @ coef
    else:
        intercept = np.zeros(coef.shape[1])
    return FitResult(
        coef=coef,
        intercept=intercept,
        selected=ModelState.of(sel.selected),
        trace=sel.trace,
        coef_unthresholded=raw,
        thresholds=thresholds,
        ebic=sel.current,
    )


def fit_raw(x, y, groups: GroupSpec, config: SessConfig | None = None) -> FitResult:
    """Standardize, expand and fit raw data in one call."""
    return fit(prepare(x, y, groups), config)
