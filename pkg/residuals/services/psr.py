"""
Probability-scale residuals and their interval-censored companions.

For a continuous fitted CDF ``F`` the residual of an exact time ``t`` is
``2F(t) - 1`` and the residual of an interval ``(l, u]`` is
``F(l) + F(u) - 1``, the conditional mean of the exact-time residual over
the interval. Adjusted Cox-Snell residuals replace the interval of
unit-exponential residuals by its conditional mean; Lagakos residuals
centre them at zero.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from ..censored import Dataset, Outcome, OutcomeClass, classify
from ..exceptions import DataFormatError, InvalidParameterError, ZeroProbabilityIntervalError
from ..import_utils import format_number, read_csv_rows
from .distributions import LifetimeDistribution
from .fitting import FittedModel, fitted_distribution, model_dataset

logger = logging.getLogger(__name__)

RESIDUAL_COLUMNS = ["id", "class", "psr", "psr_normal", "cox_snell_adj", "lagakos", "flags"]

FLAG_SATURATED = "saturated"
FLAG_COX_SNELL_LIMIT = "cox_snell_limit"


@dataclass(frozen=True, slots=True)
class ResidualRecord:
    id: str
    outcome_class: OutcomeClass
    psr: float
    cox_snell_adj: float | None = None
    lagakos: float | None = None
    psr_normal: float | None = None
    saturated: bool = False
    cox_snell_limit: bool = False

    @property
    def flags(self) -> list[str]:
        flags = []
        if self.saturated:
            flags.append(FLAG_SATURATED)
        if self.cox_snell_limit:
            flags.append(FLAG_COX_SNELL_LIMIT)
        return flags


def psr_exact(F: LifetimeDistribution, t):
    t_array = np.asarray(t, dtype=float)
    if np.any(~(t_array > 0)):
        raise InvalidParameterError("exact residual needs t > 0")
    return 2.0 * F.cdf(t) - 1.0


def _check_interval(l, u) -> None:
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(~(l >= 0)) or np.any(np.isinf(l)) or np.any(~(l < u)):
        raise InvalidParameterError("interval residual needs 0 <= l < u <= inf")


def psr_interval(F: LifetimeDistribution, l, u):
    _check_interval(l, u)
    return F.cdf(l) + F.cdf(u) - 1.0


def psr_unified(F: LifetimeDistribution, outcome: Outcome) -> float:
    if outcome.is_exact:
        return psr_exact(F, outcome.t)
    return psr_interval(F, outcome.l, outcome.u)


def psr_arrays(F: LifetimeDistribution, exact: np.ndarray, t: np.ndarray, l: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized unified residual; ``F`` may carry one location per row."""
    exact = np.asarray(exact, dtype=bool)
    safe_t = np.where(exact, t, 1.0)
    exact_part = 2.0 * np.asarray(F.cdf(safe_t)) - 1.0
    interval_part = np.asarray(F.cdf(np.where(exact, 0.0, l))) + np.asarray(F.cdf(np.where(exact, np.inf, u))) - 1.0
    return np.where(exact, exact_part, interval_part)


def psr_interval_by_uniform_expectation(F: LifetimeDistribution, l: float, u: float, nodes: int = 8) -> float:
    """Mean of ``R ~ U(-1, 1)`` restricted to ``(2F(l) - 1, 2F(u) - 1]``, by Gauss-Legendre quadrature."""
    _check_interval(l, u)
    a = 2.0 * F.cdf(l) - 1.0
    b = 2.0 * F.cdf(u) - 1.0
    if not b > a:
        raise ZeroProbabilityIntervalError("interval has zero fitted probability")
    x, w = np.polynomial.legendre.leggauss(nodes)
    r = 0.5 * (b - a) * x + 0.5 * (a + b)
    # U(-1, 1) density 1/2 cancels between numerator and normalizer.
    numerator = 0.5 * (b - a) * float(np.sum(w * r))
    return numerator / (b - a)


def psr_normal_transform(psr):
    """``Phi^{-1}((psr + 1) / 2)``, evaluated so that it is exactly odd."""
    x = np.asarray(psr, dtype=float)
    if np.any(np.abs(x) > 1) or np.any(np.isnan(x)):
        raise InvalidParameterError("residual must lie in [-1, 1]")
    with np.errstate(divide="ignore"):
        value = np.where(x <= 0, ndtri((1.0 + x) / 2.0), -ndtri((1.0 - x) / 2.0))
    if value.ndim == 0:
        return float(value)
    return value


def adjusted_cox_snell(F: LifetimeDistribution, l, u) -> float:
    """
    Conditional mean of a unit-exponential residual over ``(H(l), H(u)]``
    with ``H = -log S``; the ``u = inf`` limit is ``1 + H(l)``.
    """
    _check_interval(l, u)
    log_s_l = float(F.logsf(l))
    log_s_u = float(F.logsf(u))
    if not log_s_u < log_s_l:
        raise ZeroProbabilityIntervalError("adjusted Cox-Snell residual needs S(l) > S(u)", l=float(l), u=float(u))
    # Scaled by S(l): [(1 - log S(l)) - rho (1 - log S(u))] / (1 - rho), rho = S(u)/S(l).
    rho = math.exp(log_s_u - log_s_l)
    upper_term = 0.0 if rho == 0.0 else rho * (1.0 - log_s_u)
    return ((1.0 - log_s_l) - upper_term) / (-math.expm1(log_s_u - log_s_l))


def lagakos_residual(cox_snell_adj: float) -> float:
    return 1.0 - cox_snell_adj


def residuals_for_dataset(
    model: FittedModel,
    data: Dataset,
    companions: bool = True,
    transform: bool = True,
) -> list[ResidualRecord]:
    data = model_dataset(model, data)
    handle = fitted_distribution(model, data)
    arrays = data.outcome_arrays()
    values = psr_arrays(handle, arrays.exact, arrays.t, arrays.l, arrays.u)
    locations = np.atleast_1d(handle.mu)

    records: list[ResidualRecord] = []
    saturated_count = 0
    for index, observation in enumerate(data):
        outcome = observation.outcome
        outcome_class = classify(outcome)
        psr = float(np.clip(values[index], -1.0, 1.0))
        saturated = abs(psr) == 1.0
        saturated_count += saturated

        cox_snell = lagakos = None
        limit = False
        if companions and not outcome.is_exact:
            subject = LifetimeDistribution(handle.kind, float(locations[index]), handle.sigma)
            try:
                cox_snell = adjusted_cox_snell(subject, outcome.l, outcome.u)
                lagakos = lagakos_residual(cox_snell)
                limit = math.isinf(outcome.u)
            except ZeroProbabilityIntervalError:
                logger.warning("Observation %s has zero fitted probability; companions skipped", observation.id)

        records.append(
            ResidualRecord(
                id=observation.id,
                outcome_class=outcome_class,
                psr=psr,
                cox_snell_adj=cox_snell,
                lagakos=lagakos,
                psr_normal=psr_normal_transform(psr) if transform else None,
                saturated=saturated,
                cox_snell_limit=limit,
            )
        )
    if saturated_count:
        logger.warning("%d residual(s) saturated at +/-1", saturated_count)
    return records


def write_residuals(records: Sequence[ResidualRecord], path: str | Path) -> Path:
    path = Path(path)
    with path.open(mode="w", encoding="utf-8", newline="") as file_handle:
        writer = csv.DictWriter(file_handle, fieldnames=RESIDUAL_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            writer.writerow(
                {
                    "id": record.id,
                    "class": record.outcome_class.value,
                    "psr": format_number(record.psr),
                    "psr_normal": format_number(record.psr_normal),
                    "cox_snell_adj": format_number(record.cox_snell_adj),
                    "lagakos": format_number(record.lagakos),
                    "flags": ";".join(record.flags),
                }
            )
    return path


def _optional_float(raw: str | None, row: int, column: str) -> float | None:
    value = (raw or "").strip()
    if not value:
        return None
    try:
        return float(value)
    except ValueError:
        raise DataFormatError(f"not a number: {value!r}", row=row, column=column) from None


def read_residuals(path: str | Path) -> list[ResidualRecord]:
    records: list[ResidualRecord] = []
    for row_number, row in enumerate(read_csv_rows([path]), start=1):
        try:
            outcome_class = OutcomeClass((row.get("class") or "").strip())
        except ValueError:
            raise DataFormatError(f"unknown class {row.get('class')!r}", row=row_number, column="class") from None
        psr = _optional_float(row.get("psr"), row_number, "psr")
        if psr is None:
            raise DataFormatError("missing psr", row=row_number, column="psr")
        flags = set(filter(None, (row.get("flags") or "").split(";")))
        records.append(
            ResidualRecord(
                id=(row.get("id") or "").strip(),
                outcome_class=outcome_class,
                psr=psr,
                cox_snell_adj=_optional_float(row.get("cox_snell_adj"), row_number, "cox_snell_adj"),
                lagakos=_optional_float(row.get("lagakos"), row_number, "lagakos"),
                psr_normal=_optional_float(row.get("psr_normal"), row_number, "psr_normal"),
                saturated=FLAG_SATURATED in flags,
                cox_snell_limit=FLAG_COX_SNELL_LIMIT in flags,
            )
        )
    if not records:
        raise DataFormatError("residual file has no rows")
    return records
