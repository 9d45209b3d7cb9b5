"""Group structures over predictors and responses, and their block expansion.

Groups may overlap. Expansion concatenates the member columns of every group
in order, so a column shared by two groups appears twice in the expanded
matrix. All indices here are 0-based; files use 1-based indices (see ``io``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyGroup, IndexOutOfRange, InvalidArgs
from .numerics import Scaling, standardize_columns


def _freeze(groups: Sequence[Sequence[int]], kind: str) -> tuple[tuple[int, ...], ...]:
    out = []
    for g, members in enumerate(groups):
        members = tuple(int(i) for i in members)
        if not members:
            raise EmptyGroup(f"{kind} group {g} is empty")
        out.append(members)
    if not out:
        raise EmptyGroup(f"no {kind} groups given")
    return tuple(out)


@dataclass(frozen=True)
class GroupSpec:
    """Predictor groups and response groups as lists of column indices.

    ``n_predictors``/``n_responses`` are the original column counts; every
    original column must belong to at least one group.
    """

    predictor_groups: tuple[tuple[int, ...], ...]
    response_groups: tuple[tuple[int, ...], ...]
    n_predictors: int
    n_responses: int
    predictor_names: tuple[str, ...] = field(default=())
    response_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        xg = _freeze(self.predictor_groups, "predictor")
        yg = _freeze(self.response_groups, "response")
        object.__setattr__(self, "predictor_groups", xg)
        object.__setattr__(self, "response_groups", yg)
        for kind, groups, size in (("predictor", xg, self.n_predictors),
                                   ("response", yg, self.n_responses)):
            seen = np.zeros(size, dtype=bool)
            for g, members in enumerate(groups):
                for i in members:
                    if not 0 <= i < size:
                        raise IndexOutOfRange(
                            f"{kind} group {g} references column {i}, "
                            f"valid range is 0..{size - 1}"
                        )
                    seen[i] = True
            if not seen.all():
                missing = int(np.flatnonzero(~seen)[0])
                raise InvalidArgs(f"{kind} column {missing} is not in any group")
        if not self.predictor_names:
            object.__setattr__(self, "predictor_names",
                               tuple(f"X{k + 1}" for k in range(len(xg))))
        if not self.response_names:
            object.__setattr__(self, "response_names",
                               tuple(f"Y{j + 1}" for j in range(len(yg))))

    @classmethod
    def contiguous(cls, x_sizes: Sequence[int], y_sizes: Sequence[int]) -> "GroupSpec":
        """Non-overlapping groups of consecutive columns with the given sizes."""
        def split(sizes):
            bounds = np.cumsum([0, *sizes])
            return [tuple(range(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
        return cls(split(x_sizes), split(y_sizes), int(sum(x_sizes)), int(sum(y_sizes)))

    @property
    def K(self) -> int:
        return len(self.predictor_groups)

    @property
    def J(self) -> int:
        return len(self.response_groups)

    @property
    def x_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.predictor_groups])

    @property
    def y_sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.response_groups])

    @property
    def x_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.x_sizes)])

    @property
    def y_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.y_sizes)])

    @property
    def x_origin(self) -> np.ndarray:
        """Original predictor index of every expanded predictor column."""
        return np.array([i for g in self.predictor_groups for i in g], dtype=int)

    @property
    def y_origin(self) -> np.ndarray:
        return np.array([i for g in self.response_groups for i in g], dtype=int)

    def block_size(self, k: int, j: int) -> int:
        return len(self.predictor_groups[k]) * len(self.response_groups[j])


class BlockCoordinate(NamedTuple):
    """Entry ``(row, col)`` of coefficient block ``(k, j)``."""

    k: int
    j: int
    row: int
    col: int


def to_flat(coord: BlockCoordinate, groups: GroupSpec) -> tuple[int, int]:
    """Expanded (row, col) position of a block coordinate."""
    k, j, a, m = coord
    if not (0 <= k < groups.K and 0 <= j < groups.J):
        raise IndexOutOfRange(f"block ({k}, {j}) out of range")
    if not (0 <= a < len(groups.predictor_groups[k])
            and 0 <= m < len(groups.response_groups[j])):
        raise IndexOutOfRange(f"entry ({a}, {m}) outside block ({k}, {j})")
    return int(groups.x_offsets[k] + a), int(groups.y_offsets[j] + m)


def from_flat(row: int, col: int, groups: GroupSpec) -> BlockCoordinate:
    """Inverse of :func:`to_flat`."""
    xo, yo = groups.x_offsets, groups.y_offsets
    if not (0 <= row < xo[-1] and 0 <= col < yo[-1]):
        raise IndexOutOfRange(f"expanded position ({row}, {col}) out of range")
    k = int(np.searchsorted(xo, row, side="right") - 1)
    j = int(np.searchsorted(yo, col, side="right") - 1)
    return BlockCoordinate(k, j, int(row - xo[k]), int(col - yo[j]))


@dataclass(frozen=True)
class ExpandedDataset:
    """Standardized data with group-expanded design and response matrices.

    ``x``/``y`` are the expanded matrices; ``x_std``/``y_std`` the standardized
    original matrices; ``x_scaling``/``y_scaling`` map back to raw units.
    """

    x: np.ndarray
    y: np.ndarray
    groups: GroupSpec
    x_std: np.ndarray
    y_std: np.ndarray
    x_scaling: Scaling | None = None
    y_scaling: Scaling | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.y.shape[1]

    def x_block(self, k: int) -> np.ndarray:
        o = self.groups.x_offsets
        return self.x[:, o[k]:o[k + 1]]

    def y_block(self, j: int) -> np.ndarray:
        o = self.groups.y_offsets
        return self.y[:, o[j]:o[j + 1]]


def expand(x_orig, y_orig, groups: GroupSpec, *, x_scaling: Scaling | None = None,
           y_scaling: Scaling | None = None) -> ExpandedDataset:
    """Concatenate group member columns (duplicating shared columns).

    Inputs are expected to be standardized already; see :func:`prepare`.
    """
    x = np.asarray(x_orig, dtype=float)
    y = np.asarray(y_orig, dtype=float)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"x {x.shape} and y {y.shape} are not conformable")
    if x.shape[1] != groups.n_predictors or y.shape[1] != groups.n_responses:
        raise DimensionMismatch(
            f"groups describe {groups.n_predictors} predictors and "
            f"{groups.n_responses} responses, data has {x.shape[1]} and {y.shape[1]}"
        )
    return ExpandedDataset(
        x=np.ascontiguousarray(x[:, groups.x_origin]),
        y=np.ascontiguousarray(y[:, groups.y_origin]),
        groups=groups,
        x_std=x,
        y_std=y,
        x_scaling=x_scaling,
        y_scaling=y_scaling,
    )


def prepare(x_raw, y_raw, groups: GroupSpec) -> ExpandedDataset:
    """Standardize raw data once, then expand it."""
    xs, xsc = standardize_columns(x_raw, return_scaling=True)
    ys, ysc = standardize_columns(y_raw, return_scaling=True)
    return expand(xs, ys, groups, x_scaling=xsc, y_scaling=ysc)


def collapse_estimate(b_expanded, groups: GroupSpec) -> np.ndarray:
    """Map an expanded coefficient matrix back to original columns.

    Entries that land on the same original (predictor, response) pair are
    summed, which keeps ``x_expanded @ b_expanded == x_orig @ collapsed``.

    ``b_expanded`` may be a dense (p_expanded, q_expanded) array or a mapping
    from :class:`BlockCoordinate` to value.
    """
    out = np.zeros((groups.n_predictors, groups.n_responses))
    xo, yo = groups.x_origin, groups.y_origin
    if isinstance(b_expanded, dict):
        for coord, value in b_expanded.items():
            r, c = to_flat(coord, groups)
            out[xo[r], yo[c]] += value
        return out
    b = np.asarray(b_expanded, dtype=float)
    if b.shape != (xo.size, yo.size):
        raise DimensionMismatch(
            f"expanded estimate has shape {b.shape}, expected {(xo.size, yo.size)}"
        )
    np.add.at(out, (xo[:, None], yo[None, :]), b)
    return out
