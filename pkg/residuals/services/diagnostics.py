"""Residual diagnostics: smoothed trends, uniform QQ data and index plots."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..censored import Dataset, OutcomeClass
from ..conf import psr_setting
from ..exceptions import (
    CensoredRecordsError,
    DataFormatError,
    DegenerateDataError,
    DimensionMismatchError,
    EmptySampleError,
    InvalidParameterError,
)
from .psr import ResidualRecord, psr_normal_transform

logger = logging.getLogger(__name__)

MIN_TREND_POINTS = 10
BAND_Z = 1.96
INTERIOR_FRACTION = 0.8


@dataclass(frozen=True)
class TrendData:
    covariate: str
    x: np.ndarray
    psr: np.ndarray
    classes: list[OutcomeClass]
    grid: np.ndarray
    fitted: np.ndarray
    standard_error: np.ndarray
    span: float
    neighbors: int
    sigma: float

    @property
    def half_width(self) -> np.ndarray:
        return BAND_Z * self.standard_error


@dataclass(frozen=True)
class QqData:
    sample: np.ndarray
    theoretical: np.ndarray

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.sample - self.theoretical)))


@dataclass(frozen=True, slots=True)
class IndexRow:
    index: int
    value: float
    outcome_class: OutcomeClass
    flagged: bool


def _tricube(d: np.ndarray) -> np.ndarray:
    return np.where(d < 1.0, (1.0 - np.clip(d, 0.0, 1.0) ** 3) ** 3, 0.0)


def local_linear_weights(x: np.ndarray, at: np.ndarray, neighbors: int) -> np.ndarray:
    """
    Rows of the local-linear smoother matrix: ``fitted(at[i]) = weights[i] @ y``.

    Each point uses a tricube window reaching its ``neighbors``-th nearest
    observation; a window with no spread in ``x`` falls back to a local
    weighted mean.
    """
    dx = x[None, :] - at[:, None]
    distance = np.abs(dx)
    reach = np.partition(distance, neighbors - 1, axis=1)[:, neighbors - 1]
    # Widen slightly so the neighbors-th point keeps a positive weight.
    reach = np.maximum(reach * (1.0 + 1e-10), np.finfo(float).tiny)
    w = _tricube(distance / reach[:, None])
    s0 = w.sum(axis=1)
    s1 = (w * dx).sum(axis=1)
    s2 = (w * dx**2).sum(axis=1)
    det = s0 * s2 - s1**2
    linear = det > 1e-12 * np.maximum(s0 * s2, np.finfo(float).tiny)
    safe_det = np.where(linear, det, 1.0)
    local_linear = w * (s2[:, None] - s1[:, None] * dx) / safe_det[:, None]
    local_mean = w / s0[:, None]
    return np.where(linear[:, None], local_linear, local_mean)


def _smooth_at_data(x: np.ndarray, y: np.ndarray, neighbors: int, chunk: int = 2048) -> tuple[np.ndarray, float]:
    """Fitted values at the observations and the trace of the smoother matrix, in row blocks."""
    fitted = np.empty(x.size)
    trace = 0.0
    for start in range(0, x.size, chunk):
        stop = min(start + chunk, x.size)
        weights = local_linear_weights(x, x[start:stop], neighbors)
        fitted[start:stop] = weights @ y
        trace += float(np.sum(weights[np.arange(stop - start), np.arange(start, stop)]))
    return fitted, trace


def trend(
    residuals: Sequence[float],
    covariate: Sequence[float],
    classes: Sequence[OutcomeClass] | None = None,
    span: float | None = None,
    grid_points: int | None = None,
    name: str = "x",
) -> TrendData:
    """
    Local-linear tricube smooth of residuals against a covariate, with a
    pointwise weighted-least-squares standard error.
    """
    y = np.asarray(residuals, dtype=float).reshape(-1)
    x = np.asarray(covariate, dtype=float).reshape(-1)
    if y.size != x.size:
        raise DimensionMismatchError(f"{y.size} residuals but {x.size} covariate values")
    classes = list(classes) if classes is not None else [OutcomeClass.EXACT] * y.size
    if len(classes) != y.size:
        raise DimensionMismatchError("one outcome class is needed per residual")
    if y.size < MIN_TREND_POINTS:
        raise EmptySampleError(f"trend needs at least {MIN_TREND_POINTS} points, got {y.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidParameterError("trend inputs must be finite")
    if np.ptp(x) == 0:
        raise DegenerateDataError(f"covariate {name!r} has zero variance")
    span = float(span if span is not None else psr_setting("LOESS_SPAN"))
    if not (0 < span <= 1):
        raise InvalidParameterError(f"span must lie in (0, 1], got {span!r}")
    grid_points = int(grid_points or psr_setting("TREND_GRID_POINTS"))

    neighbors = min(max(int(math.ceil(span * x.size)), 2), x.size)
    grid = np.linspace(x.min(), x.max(), grid_points)
    curve_weights = local_linear_weights(x, grid, neighbors)
    fitted_at_data, trace = _smooth_at_data(x, y, neighbors)
    dof = max(x.size - trace, 1.0)
    sigma = math.sqrt(float(np.sum((y - fitted_at_data) ** 2)) / dof)
    standard_error = sigma * np.sqrt(np.sum(curve_weights**2, axis=1))

    logger.debug("Trend for %s: n=%d, span=%.2f, neighbors=%d, sigma=%.4g", name, x.size, span, neighbors, sigma)
    return TrendData(
        covariate=name,
        x=x,
        psr=y,
        classes=classes,
        grid=grid,
        fitted=curve_weights @ y,
        standard_error=standard_error,
        span=span,
        neighbors=neighbors,
        sigma=sigma,
    )


def interior_mask(data: TrendData, fraction: float = INTERIOR_FRACTION) -> np.ndarray:
    low, high = data.grid[0], data.grid[-1]
    margin = (1.0 - fraction) / 2.0 * (high - low)
    return (data.grid >= low + margin) & (data.grid <= high - margin)


def max_standardized_trend(data: TrendData, fraction: float = INTERIOR_FRACTION) -> float:
    """Largest ``|fitted| / SE`` over the interior of the covariate range."""
    mask = interior_mask(data, fraction) & (data.standard_error > 0)
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(data.fitted[mask]) / data.standard_error[mask]))


def qq_uniform(residuals: Sequence[float], classes: Sequence[OutcomeClass] | None = None) -> QqData:
    """Ordered residuals against ``U(-1, 1)`` quantiles ``2 (i - 0.5) / n - 1``."""
    sample = np.sort(np.asarray(residuals, dtype=float).reshape(-1))
    if sample.size == 0:
        raise EmptySampleError("QQ data needs at least one residual")
    if classes is not None and any(OutcomeClass(c) is not OutcomeClass.EXACT for c in classes):
        raise CensoredRecordsError("QQ data is defined for exactly observed outcomes only")
    n = sample.size
    theoretical = 2.0 * (np.arange(1, n + 1) - 0.5) / n - 1.0
    return QqData(sample=sample, theoretical=theoretical)


def index_plot(
    residuals: Sequence[float],
    classes: Sequence[OutcomeClass],
    transform: bool = True,
    threshold: float | None = None,
) -> list[IndexRow]:
    """One row per residual in input order; flags use the normal-quantile scale whatever is displayed."""
    threshold = float(threshold if threshold is not None else psr_setting("OUTLIER_THRESHOLD"))
    psr = np.asarray(residuals, dtype=float).reshape(-1)
    if len(classes) != psr.size:
        raise DimensionMismatchError("one outcome class is needed per residual")
    normal = np.atleast_1d(psr_normal_transform(psr))
    values = normal if transform else psr
    return [
        IndexRow(index=i + 1, value=float(values[i]), outcome_class=OutcomeClass(classes[i]), flagged=bool(abs(normal[i]) > threshold))
        for i in range(psr.size)
    ]


def covariate_for_records(records: Sequence[ResidualRecord], data: Dataset, name: str) -> np.ndarray:
    """Covariate ``name`` aligned to residual records by id."""
    column = data.covariate(name)
    positions = {identifier: index for index, identifier in enumerate(data.ids)}
    values = []
    for row, record in enumerate(records, start=1):
        if record.id not in positions:
            raise DataFormatError(f"residual id {record.id!r} not found in data", row=row, column="id")
        values.append(column[positions[record.id]])
    return np.asarray(values, dtype=float)
