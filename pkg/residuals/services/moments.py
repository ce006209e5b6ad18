"""
Theoretical mean and variance of the PSR under an inspection scheme.

Given ``(K, C, pi)`` the residual has mean zero and second moment
``sum_j pi_j p_j^3 v_j + p_j r_j^2`` over the intervals
``(C_j, C_{j+1}]``, with ``p_j`` the interval probability, ``r_j`` the
interval residual and ``v_j`` the normalized spread of the exact-time
residual inside the interval (``1/3`` for every continuous law).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

from ..conf import psr_setting
from ..exceptions import InvalidParameterError, SchemeError, ZeroProbabilityIntervalError
from .distributions import LifetimeDistribution
from .random_streams import OUTER_STREAM, SeededStreams, map_shards, shards
from .schemes import GapKind, InspectionScheme

logger = logging.getLogger(__name__)

CONTINUOUS_V = 1.0 / 3.0


class QuadratureMethod(str, Enum):
    SUBSTITUTION = "substitution"
    GAUSS_LEGENDRE = "gauss-legendre"


@dataclass(frozen=True, slots=True)
class IntervalTerm:
    index: int
    p: float
    r: float
    v: float
    pi: float

    @property
    def contribution(self) -> float:
        return self.pi * self.p**3 * self.v + self.p * self.r**2


@dataclass(frozen=True)
class SchemeMoments:
    scheme: str
    mean: float
    variance: float
    standard_error: float = 0.0
    method: str = "closed-form"
    draws: int = 0
    seed: int | None = None
    per_interval_terms: list[IntervalTerm] = field(default_factory=list)


# Interval spread ---------------------------------------------------------


def vj_quadrature(
    F: LifetimeDistribution,
    l: float,
    u: float,
    method: str = QuadratureMethod.SUBSTITUTION,
    nodes: int | None = None,
) -> float:
    """
    ``(1/p^3) * integral over (l, u] of (2F(t) - 1 - r)^2 dF(t)``.

    The substitution ``s = F(t)`` turns the integrand into a quadratic in
    ``s`` that a two-point Gauss-Legendre rule integrates exactly. The
    direct rule works on ``t`` with ``t = l + x / (1 - x)`` for an infinite
    upper end.
    """
    if not (0 <= l < u) or math.isinf(l):
        raise InvalidParameterError("interval needs 0 <= l < u <= inf")
    a = float(F.cdf(l))
    b = float(F.cdf(u))
    p = b - a
    if not p > 0:
        raise ZeroProbabilityIntervalError("v_j is undefined on a zero-probability interval", l=l, u=u)
    r = a + b - 1.0

    if method == QuadratureMethod.SUBSTITUTION:
        x, w = np.polynomial.legendre.leggauss(2)
        s = 0.5 * p * x + 0.5 * (a + b)
        integral = 0.5 * p * float(np.sum(w * (2.0 * s - 1.0 - r) ** 2))
        return integral / p**3

    if method != QuadratureMethod.GAUSS_LEGENDRE:
        raise InvalidParameterError(f"unknown quadrature method {method!r}")
    x, w = np.polynomial.legendre.leggauss(int(nodes or psr_setting("QUADRATURE_NODES")))
    if math.isinf(u):
        y = 0.5 * (x + 1.0)
        t = l + y / (1.0 - y)
        jacobian = 0.5 / (1.0 - y) ** 2
    else:
        t = l + 0.5 * (u - l) * (x + 1.0)
        jacobian = np.full(x.shape, 0.5 * (u - l))
    t = np.maximum(t, np.finfo(float).tiny)
    density = np.exp(np.asarray(F.log_density(t)))
    integrand = (2.0 * np.asarray(F.cdf(t)) - 1.0 - r) ** 2 * density * jacobian
    return float(np.sum(w * integrand)) / p**3


# Conditional variance ----------------------------------------------------


def _validate_inspection(C: Sequence[float], pi: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    C = np.asarray(C, dtype=float).reshape(-1)
    pi = np.asarray(pi, dtype=float).reshape(-1)
    if C.size and (np.any(~np.isfinite(C)) or C[0] <= 0 or np.any(np.diff(C) <= 0)):
        raise InvalidParameterError("inspection times must be positive, finite and strictly increasing")
    if pi.size != C.size + 1:
        raise InvalidParameterError(f"pi needs {C.size + 1} entries, got {pi.size}")
    if np.any((pi < 0) | (pi > 1)):
        raise InvalidParameterError("pi entries must lie in [0, 1]")
    return C, pi


def conditional_variance_terms(F: LifetimeDistribution, C: Sequence[float], pi: Sequence[float]) -> list[IntervalTerm]:
    C, pi = _validate_inspection(C, pi)
    bounds = np.concatenate([[0.0], C, [math.inf]])
    cdf = np.concatenate([[0.0], np.asarray(F.cdf(C), dtype=float).reshape(-1), [1.0]])
    terms = []
    for j in range(C.size + 1):
        p = cdf[j + 1] - cdf[j]
        r = cdf[j] + cdf[j + 1] - 1.0
        v = vj_quadrature(F, bounds[j], bounds[j + 1]) if (p > 0 and pi[j] > 0) else CONTINUOUS_V
        terms.append(IntervalTerm(index=j, p=float(p), r=float(r), v=float(v), pi=float(pi[j])))
    return terms


def conditional_variance(F: LifetimeDistribution, C: Sequence[float], pi: Sequence[float]) -> float:
    """``E(R^2 | K, C, pi)`` with ``C_0 = 0`` and ``C_{K+1} = inf``."""
    return float(sum(term.contribution for term in conditional_variance_terms(F, C, pi)))


def variance_from_cdf_grid(cdf_grid: np.ndarray, pi_grid: np.ndarray) -> np.ndarray:
    """
    Row-wise conditional variance from ``F`` at ``[0, C_1, ..., C_K, inf, ...]``.

    Padding columns evaluate to ``F = 1`` and contribute nothing.
    """
    p = np.diff(cdf_grid, axis=1)
    r = cdf_grid[:, :-1] + cdf_grid[:, 1:] - 1.0
    return np.sum(pi_grid * p**3 * CONTINUOUS_V + p * r**2, axis=1)


# Closed forms for the six canonical schemes ------------------------------


def closed_form_variance(preset: str, cdf_values: Sequence[float], v: float = CONTINUOUS_V) -> float:
    """
    Conditional variance of a canonical scheme from ``F(C_1), ..., F(C_K)``.

    ``s1`` ignores the values; ``s2``, ``s3`` and ``s5`` take one value,
    ``s4`` two, and ``s6`` any number.
    """
    key = preset.lower()
    values = [float(value) for value in cdf_values]
    if any(not (0.0 <= value <= 1.0) for value in values):
        raise InvalidParameterError("CDF values must lie in [0, 1]")
    if key == "s1":
        return CONTINUOUS_V
    if key in ("s2", "s3", "s5"):
        if len(values) != 1:
            raise InvalidParameterError(f"{key} takes one CDF value")
        f = values[0]
        if key == "s2":
            return v * f**3 + f * (1.0 - f)
        if key == "s3":
            return v * (1.0 - f) ** 3 + f * (1.0 - f)
        return f * (1.0 - f)
    if key == "s4":
        if len(values) != 2:
            raise InvalidParameterError("s4 takes two CDF values")
        f1, f2 = values
        return v * (f2 - f1) ** 3 + f2 * (1.0 - f2) + f1 * f2 * (f2 - f1)
    if key == "s6":
        grid = np.concatenate([[0.0], values, [1.0]])
        p = np.diff(grid)
        r = grid[:-1] + grid[1:] - 1.0
        return float(np.sum(p * r**2))
    raise SchemeError(f"unknown scheme preset {preset!r}")


def printed_s4_polynomial(f1: float, f2: float, v: float = CONTINUOUS_V) -> float:
    """The doubly-censored reduction as it is usually printed; it disagrees with the direct sum."""
    return v * (f2 - f1) ** 3 + f1**3 - 3 * f1**2 + 2 * f1 - f2**3 + 2 * f2**2 - f2


def s6_identity_variance(cdf_values: Sequence[float]) -> float:
    """``sum_{k=1}^{K} F(C_{k+1}) F(C_k) [F(C_{k+1}) - F(C_k)]`` with ``F(C_{K+1}) = 1``."""
    grid = np.concatenate([np.asarray(cdf_values, dtype=float), [1.0]])
    return float(np.sum(grid[1:] * grid[:-1] * (grid[1:] - grid[:-1])))


# Scheme-level expectation ------------------------------------------------


def mc_standard_error(values: np.ndarray) -> float:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def _terms_from_samples(p: np.ndarray, r: np.ndarray, scheme: InspectionScheme) -> list[IntervalTerm]:
    """Average interval terms by index over sampled inspection processes."""
    terms = []
    for j in range(p.shape[1]):
        present = p[:, j] > 0
        if not present.any():
            continue
        terms.append(
            IntervalTerm(
                index=j,
                p=float(np.mean(p[:, j])),
                r=float(np.mean(r[present, j])),
                v=CONTINUOUS_V,
                pi=float(scheme.pi_at(j)),
            )
        )
    return terms


def _single_inspection_moments(F_event: LifetimeDistribution, scheme: InspectionScheme) -> SchemeMoments:
    """K = 1: integrate over the censoring time on its probability scale."""
    pi0, pi1 = (float(p) for p in scheme.pi_at(np.array([0, 1])))

    def cdf_at(s: float) -> float:
        return float(F_event.cdf(float(scheme.gap_dist.quantile(s))))

    def conditional(s: float) -> float:
        f = cdf_at(s)
        return pi0 * f**3 * CONTINUOUS_V + f * (f - 1.0) ** 2 + pi1 * (1.0 - f) ** 3 * CONTINUOUS_V + (1.0 - f) * f**2

    if scheme.gap_dist.kind is GapKind.FIXED:
        f = float(F_event.cdf(scheme.gap_dist.tau))
        variance = conditional(0.5)
        mean_f, mean_r0 = f, f - 1.0
        method = "deterministic"
    else:
        variance, error = integrate.quad(conditional, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-11)
        mean_f, _ = integrate.quad(cdf_at, 0.0, 1.0, limit=200, epsabs=1e-13, epsrel=1e-11)
        mean_r0 = mean_f - 1.0
        method = "quadrature"
        logger.debug("Scheme quadrature error estimate %.3g", error)

    terms = [
        IntervalTerm(index=0, p=mean_f, r=mean_r0, v=CONTINUOUS_V, pi=pi0),
        IntervalTerm(index=1, p=1.0 - mean_f, r=mean_f, v=CONTINUOUS_V, pi=pi1),
    ]
    return SchemeMoments(
        scheme=scheme.label, mean=0.0, variance=float(variance), method=method, per_interval_terms=terms
    )


def scheme_variance(
    F_event: LifetimeDistribution,
    scheme: InspectionScheme,
    draws: int | None = None,
    seed: int = 0,
    threads: int | None = None,
) -> SchemeMoments:
    """
    Scheme-level variance ``E_{(K, C)}[E(R^2 | K, C, pi)]``.

    Uncensored schemes give ``1/3`` exactly and single-inspection schemes
    are integrated by adaptive quadrature; everything else averages the
    conditional variance over ``draws`` sampled inspection processes.
    """
    if scheme.all_exact:
        return SchemeMoments(
            scheme=scheme.label,
            mean=0.0,
            variance=CONTINUOUS_V,
            method="closed-form",
            per_interval_terms=[IntervalTerm(index=0, p=1.0, r=0.0, v=CONTINUOUS_V, pi=1.0)],
        )
    if scheme.k_dist.fixed_value == 1:
        return _single_inspection_moments(F_event, scheme)

    draws = int(draws or psr_setting("SCHEME_DRAWS"))
    if draws < 2:
        raise InvalidParameterError("Monte Carlo scheme variance needs at least 2 draws")
    streams = SeededStreams(seed)

    def run(shard):
        rng = streams.generator(OUTER_STREAM, shard.index)
        inspections = scheme.sample_inspections(shard.size, rng)
        cdf_grid = np.asarray(F_event.cdf(inspections.grid), dtype=float)
        pi_grid = scheme.pi_at(np.arange(cdf_grid.shape[1] - 1))[None, :]
        p = np.diff(cdf_grid, axis=1)
        r = cdf_grid[:, :-1] + cdf_grid[:, 1:] - 1.0
        return variance_from_cdf_grid(cdf_grid, pi_grid), p, r

    logger.info("Averaging conditional variance over %d scheme draws (seed=%d)", draws, seed)
    results = map_shards(run, shards(draws), threads)
    values = np.concatenate([values for values, _, _ in results])
    width = max(p.shape[1] for _, p, _ in results)
    p = np.vstack([np.pad(p, ((0, 0), (0, width - p.shape[1]))) for _, p, _ in results])
    r = np.vstack([np.pad(r, ((0, 0), (0, width - r.shape[1])), constant_values=1.0) for _, _, r in results])

    return SchemeMoments(
        scheme=scheme.label,
        mean=0.0,
        variance=float(np.mean(values)),
        standard_error=mc_standard_error(values),
        method="monte-carlo",
        draws=draws,
        seed=seed,
        per_interval_terms=_terms_from_samples(p, r, scheme),
    )
