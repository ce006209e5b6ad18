"""
Closed-form PSR behaviour for exponential event times inspected on the
equally spaced grid ``0, tau, 2 tau, ...``.

With ``q = exp(-lambda tau)`` an event in ``(k tau, (k + 1) tau]`` has
residual ``1 - q^k (1 + q)`` and ``k`` is geometric with success
probability ``1 - q``; as ``tau -> 0`` the residual law tends to
``U(-1, 1)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import EmptySampleError, InvalidParameterError
from .random_streams import EVENT_STREAM, SeededStreams, map_shards, shards

logger = logging.getLogger(__name__)

# Guards the floor against rounding when x sits exactly on an atom; never applied below the first atom.
FLOOR_EPSILON = 1e-9

LIMIT_X_GRID = np.round(np.linspace(-0.99, 0.99, 199), 10)


@dataclass(frozen=True, slots=True)
class GridSetting:
    lam: float
    tau: float

    def __post_init__(self) -> None:
        for name, value in (("lambda", self.lam), ("tau", self.tau)):
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value!r}")

    @property
    def rate_step(self) -> float:
        return self.lam * self.tau

    @property
    def q(self) -> float:
        return math.exp(-self.rate_step)


@dataclass(frozen=True)
class GridAtoms:
    setting: GridSetting
    k: np.ndarray
    psr: np.ndarray
    probability: np.ndarray
    tail_mass: float


@dataclass(frozen=True)
class LimitRow:
    lam: float
    tau: float
    sup_distance: float


@dataclass(frozen=True)
class LimitReport:
    rows: list[LimitRow] = field(default_factory=list)

    @property
    def decreasing(self) -> bool:
        distances = [row.sup_distance for row in self.rows]
        return all(later < earlier for earlier, later in zip(distances, distances[1:]))


def grid_psr(setting: GridSetting, k):
    k_array = np.asarray(k)
    if np.any(k_array < 0):
        raise InvalidParameterError("grid index must be nonnegative")
    q = setting.q
    value = 1.0 - q ** k_array.astype(float) * (1.0 + q)
    if value.ndim == 0:
        return float(value)
    return value


def grid_psr_cdf(setting: GridSetting, x):
    """``Pr(R <= x) = 1 - q^(floor(u) + 1)`` with ``u = -log((1 - x) / (1 + q)) / (lambda tau)``; 0 below the first atom."""
    x_array = np.asarray(x, dtype=float)
    if np.any(~(np.abs(x_array) < 1)):
        raise InvalidParameterError("grid CDF is defined for x in (-1, 1)")
    step = setting.rate_step
    u = -np.log((1.0 - x_array) / (1.0 + setting.q)) / step
    m = np.where(u >= 0, np.floor(u + FLOOR_EPSILON * np.maximum(1.0, np.abs(u))), -1.0)
    value = np.where(m >= 0, -np.expm1(-step * (np.maximum(m, 0.0) + 1.0)), 0.0)
    if value.ndim == 0:
        return float(value)
    return value


def grid_atoms(setting: GridSetting, tail_tol: float = 1e-12) -> GridAtoms:
    """Atoms ``(k, grid_psr(k), (1 - q) q^k)`` until the remaining mass ``q^(k+1)`` drops below ``tail_tol``."""
    if not (0 < tail_tol < 1):
        raise InvalidParameterError("tail tolerance must lie in (0, 1)")
    step = setting.rate_step
    count = max(int(math.ceil(-math.log(tail_tol) / step)), 1)
    k = np.arange(count)
    probability = -np.expm1(-step) * np.exp(-step * k)
    return GridAtoms(
        setting=setting,
        k=k,
        psr=grid_psr(setting, k),
        probability=probability,
        tail_mass=math.exp(-step * count),
    )


def uniform_limit_cdf(x):
    return (np.asarray(x, dtype=float) + 1.0) / 2.0


def sup_distance_to_uniform(setting: GridSetting, x_grid: np.ndarray = LIMIT_X_GRID) -> float:
    return float(np.max(np.abs(grid_psr_cdf(setting, x_grid) - uniform_limit_cdf(x_grid))))


def grid_limit_check(settings: list[GridSetting], x_grid: np.ndarray = LIMIT_X_GRID) -> LimitReport:
    taus = [setting.tau for setting in settings]
    if any(later >= earlier for earlier, later in zip(taus, taus[1:])):
        raise InvalidParameterError("limit check needs a strictly decreasing tau sequence")
    rows = [LimitRow(s.lam, s.tau, sup_distance_to_uniform(s, x_grid)) for s in settings]
    for row in rows:
        logger.info("lambda=%g tau=%g sup distance to U(-1,1) CDF %.3g", row.lam, row.tau, row.sup_distance)
    return LimitReport(rows=rows)


def simulate_grid_psr(setting: GridSetting, n: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Residuals of ``n`` exponential event times seen only on the grid."""
    if n < 1:
        raise InvalidParameterError("sample size must be positive")
    streams = SeededStreams(seed)

    def run(shard):
        rng = streams.generator(EVENT_STREAM, shard.index)
        t = rng.exponential(1.0 / setting.lam, size=shard.size)
        return grid_psr(setting, np.floor(t / setting.tau).astype(np.int64))

    return np.concatenate(map_shards(run, shards(n), threads))


def ks_discrete(samples, support, probabilities) -> float:
    """Kolmogorov-Smirnov distance between a sample and a law on the sorted ``support`` atoms."""
    samples = np.sort(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise EmptySampleError("KS statistic needs at least one value")
    support = np.asarray(support, dtype=float)
    model_cdf = np.cumsum(np.asarray(probabilities, dtype=float))
    points = np.union1d(support, samples)
    empirical = np.searchsorted(samples, points, side="right") / samples.size
    index = np.searchsorted(support, points, side="right") - 1
    theoretical = np.where(index >= 0, model_cdf[np.maximum(index, 0)], 0.0)
    return float(np.max(np.abs(empirical - theoretical)))
