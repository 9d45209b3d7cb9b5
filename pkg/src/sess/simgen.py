"""Synthetic multiresponse data with block-diagonal sparse coefficients.

Rows of X are Gaussian with AR(1) correlation ``rho**|i-j|``; nonzero
coefficients sit in the diagonal blocks ``B_kk`` with magnitudes drawn from
``Uniform[1, 5]`` and random signs; the noise variance is set so that the
total signal variance is five times the total noise variance.

Each dataset is a pure function of its :class:`SimConfig`. The seed feeds a
``numpy.random.SeedSequence`` that is split into independent streams for the
groups, design, coefficients and noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePartition, InvalidArgs
from .grouped import GroupSpec
from .numerics import standardize_columns

GROUP_SCHEMES = ("equal", "unequal")
UNEQUAL_SIZES = (20, 30)


@dataclass(frozen=True)
class SimConfig:
    n: int = 150
    p: int = 200
    q: int = 200
    sparsity: float = 0.95
    group_scheme: str = "equal"
    group_size: int = 20
    ar_rho: float = 0.5
    seed: int = 0
    noise_var: float | None = None  # override the signal-calibrated variance

    def __post_init__(self):
        if self.n < 2 or self.p < 1 or self.q < 1:
            raise InvalidArgs("need n >= 2, p >= 1, q >= 1")
        if not 0.0 <= self.sparsity <= 1.0:
            raise InvalidArgs("sparsity must lie in [0, 1]")
        if self.group_scheme not in GROUP_SCHEMES:
            raise InvalidArgs(f"group_scheme must be one of {GROUP_SCHEMES}")
        if not -1.0 < self.ar_rho < 1.0:
            raise InvalidArgs("ar_rho must lie in (-1, 1)")
        if self.noise_var is not None and self.noise_var < 0:
            raise InvalidArgs("noise_var must be nonnegative")
        if self.seed < 0:
            raise InvalidArgs("seed must be nonnegative")


@dataclass(frozen=True)
class SimDataset:
    x: np.ndarray
    y: np.ndarray
    b_true: np.ndarray
    groups: GroupSpec
    sigma2: float
    config: SimConfig


def streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for each random component of a dataset."""
    names = ("groups", "design", "coefficients", "noise")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(names, children)}


def gen_design(n: int, p: int, ar_rho: float, rng: np.random.Generator,
               standardize: bool = True) -> np.ndarray:
    """Rows i.i.d. N(0, Sigma) with ``Sigma_ij = ar_rho**|i-j|`` via the AR(1) recursion."""
    z = rng.standard_normal((n, p))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    innov = math.sqrt(1.0 - ar_rho**2)
    for t in range(1, p):
        x[:, t] = ar_rho * x[:, t - 1] + innov * z[:, t]
    return standardize_columns(x) if standardize else x


def _partition(total: int, rng: np.random.Generator) -> list[int]:
    sizes = []
    remaining = total
    lo = min(UNEQUAL_SIZES)
    while remaining > 0:
        # sizes whose remainder can still be covered exactly
        options = [s for s in UNEQUAL_SIZES
                   if remaining - s == 0 or (remaining - s >= lo and _coverable(remaining - s))]
        if not options:
            raise InfeasiblePartition(f"cannot split {total} into groups of {UNEQUAL_SIZES}")
        s = options[int(rng.integers(len(options)))]
        sizes.append(s)
        remaining -= s
    return sizes


def _coverable(total: int) -> bool:
    a, b = UNEQUAL_SIZES
    return any((total - a * i) % b == 0 for i in range(total // a + 1))


def gen_groups(scheme: str, p: int, q: int, rng: np.random.Generator,
               group_size: int = 20) -> GroupSpec:
    """Contiguous, non-overlapping groups over predictors and responses."""
    if scheme == "equal":
        if p % group_size or q % group_size:
            raise InfeasiblePartition(f"p={p} and q={q} must be multiples of {group_size}")
        return GroupSpec.contiguous([group_size] * (p // group_size),
                                    [group_size] * (q // group_size))
    if scheme == "unequal":
        return GroupSpec.contiguous(_partition(p, rng), _partition(q, rng))
    raise InvalidArgs(f"unknown group scheme {scheme!r}")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def gen_coefficients(groups: GroupSpec, sparsity: float, p: int, q: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Diagonal-block coefficients, a ``round(sparsity * count)`` subset zeroed."""
    b = np.zeros((p, q))
    cells = []
    for k in range(min(groups.K, groups.J)):
        rows = np.array(groups.predictor_groups[k])
        cols = np.array(groups.response_groups[k])
        rr, cc = np.meshgrid(rows, cols, indexing="ij")
        cells.append(np.column_stack([rr.ravel(), cc.ravel()]))
    if not cells:
        return b
    cells = np.concatenate(cells)
    count = len(cells)
    magnitude = rng.uniform(1.0, 5.0, size=count)
    sign = np.where(rng.random(count) < 0.5, -1.0, 1.0)
    values = sign * magnitude
    n_zero = min(_round_half_up(sparsity * count), count)
    values[rng.permutation(count)[:n_zero]] = 0.0
    b[cells[:, 0], cells[:, 1]] = values
    return b


def noise_variance(signal: np.ndarray) -> float:
    """``sum_l var(signal[:, l]) / (5 q)`` using sample variances."""
    q = signal.shape[1]
    return float(np.var(signal, axis=0, ddof=1).sum() / (5.0 * q))


def gen_noise_and_response(x: np.ndarray, b_true: np.ndarray, q: int,
                           rng: np.random.Generator, noise_var: float | None = None):
    """Return ``(y, sigma2)`` with ``y = x @ b_true + E``."""
    signal = x @ b_true
    if signal.shape[1] != q:
        raise InvalidArgs(f"coefficient matrix has {signal.shape[1]} columns, expected {q}")
    sigma2 = noise_variance(signal) if noise_var is None else float(noise_var)
    noise = rng.standard_normal(signal.shape) * math.sqrt(sigma2)
    return signal + noise, sigma2


def simulate(config: SimConfig) -> SimDataset:
    rngs = streams(config.seed)
    groups = gen_groups(config.group_scheme, config.p, config.q, rngs["groups"],
                        config.group_size)
    x = gen_design(config.n, config.p, config.ar_rho, rngs["design"])
    b = gen_coefficients(groups, config.sparsity, config.p, config.q, rngs["coefficients"])
    y, sigma2 = gen_noise_and_response(x, b, config.q, rngs["noise"], config.noise_var)
    return SimDataset(x=x, y=y, b_true=b, groups=groups, sigma2=sigma2, config=config)
