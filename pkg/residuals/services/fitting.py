"""Maximum-likelihood fitting of AFT models to mixed-censored data."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from ..censored import Dataset
from ..conf import psr_setting
from ..exceptions import (
    DegenerateDataError,
    DimensionMismatchError,
    InvalidParameterError,
    RankDeficientError,
    UnknownStratumError,
)
from .basis import BasisSpec, expand_covariates
from .distributions import (
    ERROR_LAWS,
    AftSpec,
    FamilyKind,
    LifetimeDistribution,
    error_score,
    log_interval_prob_standardized,
    parse_family,
)

logger = logging.getLogger(__name__)

# Returned by log_likelihood when some outcome has zero probability.
LOGLIK_SENTINEL = -1e300


class Optimizer(str, Enum):
    QUASI_NEWTON = "quasi-newton"
    NELDER_MEAD = "nelder-mead"


@dataclass(frozen=True, slots=True)
class FitOptions:
    max_iterations: int = 500
    rel_tol: float = 1e-8
    gradient_tol: float = 1e-3
    optimizer: Optimizer = Optimizer.QUASI_NEWTON
    analytic_gradient: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "optimizer", Optimizer(self.optimizer))
        if self.max_iterations < 1:
            raise InvalidParameterError("max_iterations must be positive")
        if not (self.rel_tol > 0 and self.gradient_tol > 0):
            raise InvalidParameterError("tolerances must be positive")

    @classmethod
    def from_settings(cls, **overrides) -> FitOptions:
        values = {
            "max_iterations": int(psr_setting("FIT_MAX_ITERATIONS")),
            "rel_tol": float(psr_setting("FIT_REL_TOL")),
            "gradient_tol": float(psr_setting("FIT_GRADIENT_TOL")),
            "optimizer": psr_setting("FIT_OPTIMIZER"),
        }
        values.update({key: value for key, value in overrides.items() if value is not None})
        return cls(**values)


@dataclass(frozen=True)
class FittedModel:
    spec: AftSpec
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float
    covariate_names: tuple[str, ...]
    options: FitOptions = field(default_factory=FitOptions)
    message: str = ""
    basis: tuple[BasisSpec, ...] = ()
    n_observations: int = 0
    strata_column: str | None = None

    @property
    def family(self) -> FamilyKind:
        return self.spec.family


@dataclass(frozen=True, slots=True)
class TermScores:
    loglik: np.ndarray
    d_eta: np.ndarray
    d_log_sigma: np.ndarray
    clamped: np.ndarray


def subject_terms(kind: FamilyKind, eta: np.ndarray, sigma: float, data: Dataset, floor: float | None = None) -> TermScores:
    """Per-subject log-likelihood terms and their derivatives in ``eta`` and ``log sigma``."""
    arrays = data.outcome_arrays()
    return _terms(kind, eta, sigma, arrays.exact, arrays.t, arrays.l, arrays.u, floor)


def _terms(kind, eta, sigma, exact, t, l, u, floor) -> TermScores:
    law = ERROR_LAWS[kind]
    n = exact.size
    loglik = np.empty(n)
    d_eta = np.zeros(n)
    d_log_sigma = np.zeros(n)

    if exact.any():
        log_t = np.log(t[exact])
        w = (log_t - eta[exact]) / sigma
        psi = error_score(kind, w)
        loglik[exact] = law.logpdf(w) - math.log(sigma) - log_t
        d_eta[exact] = -psi / sigma
        d_log_sigma[exact] = -psi * w - 1.0

    censored = ~exact
    if censored.any():
        with np.errstate(divide="ignore"):
            w_l = (np.log(l[censored]) - eta[censored]) / sigma
            w_u = (np.log(u[censored]) - eta[censored]) / sigma
        log_p = log_interval_prob_standardized(law, w_l, w_u)
        g_l = _density_ratio(law, w_l, log_p)
        g_u = _density_ratio(law, w_u, log_p)
        loglik[censored] = log_p
        d_eta[censored] = -(g_u - g_l) / sigma
        d_log_sigma[censored] = -(_times(g_u, w_u) - _times(g_l, w_l))

    clamped = ~np.isfinite(loglik)
    if floor is not None:
        log_floor = math.log(floor)
        clamped = clamped | (loglik < log_floor)
        loglik = np.where(clamped, log_floor, loglik)
        d_eta = np.where(clamped, 0.0, d_eta)
        d_log_sigma = np.where(clamped, 0.0, d_log_sigma)
    return TermScores(loglik=loglik, d_eta=d_eta, d_log_sigma=d_log_sigma, clamped=clamped)


def _density_ratio(law, w: np.ndarray, log_p: np.ndarray) -> np.ndarray:
    finite = np.isfinite(w) & np.isfinite(log_p)
    safe_w = np.where(finite, w, 0.0)
    safe_log_p = np.where(finite, log_p, 0.0)
    return np.where(finite, np.exp(law.logpdf(safe_w) - safe_log_p), 0.0)


def _times(g: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.where(np.isfinite(w), g * np.where(np.isfinite(w), w, 0.0), 0.0)


# Parameter layout -------------------------------------------------------


def strata_labels(data: Dataset, spec: AftSpec | None = None) -> list[str | None]:
    labels = [obs.stratum for obs in data]
    if spec is not None and spec.strata_offsets:
        for label in labels:
            if label not in spec.strata_offsets:
                raise UnknownStratumError(f"unknown stratum {label!r}", stratum=label)
        return labels
    if data.strata and any(label is None for label in labels):
        raise UnknownStratumError("some observations have no stratum")
    return labels


def strata_dummies(labels: list[str | None], strata: tuple[str, ...]) -> np.ndarray:
    others = strata[1:]
    dummies = np.zeros((len(labels), len(others)))
    for column, stratum in enumerate(others):
        dummies[:, column] = [label == stratum for label in labels]
    return dummies


def parameter_vector(spec: AftSpec) -> np.ndarray:
    """``[mu, beta..., offsets of non-reference strata..., log sigma]`` (no ``log sigma`` for exponential)."""
    strata = sorted(spec.strata_offsets)
    values = [spec.mu, *spec.beta, *(spec.strata_offsets[s] for s in strata[1:])]
    if spec.family.has_free_scale:
        values.append(math.log(spec.sigma))
    return np.asarray(values, dtype=float)


def parameter_names(spec: AftSpec, covariate_names) -> list[str]:
    strata = sorted(spec.strata_offsets)
    names = ["mu", *(f"beta[{name}]" for name in covariate_names), *(f"offset[{s}]" for s in strata[1:])]
    if spec.family.has_free_scale:
        names.append("log_sigma")
    return names


def spec_from_vector(vector, template: AftSpec) -> AftSpec:
    vector = np.asarray(vector, dtype=float)
    p = len(template.beta)
    strata = sorted(template.strata_offsets)
    expected = 1 + p + max(len(strata) - 1, 0) + int(template.family.has_free_scale)
    if vector.size != expected:
        raise DimensionMismatchError(f"expected {expected} parameters, got {vector.size}")
    offsets = {}
    if strata:
        offsets = {strata[0]: 0.0}
        offsets.update({s: float(v) for s, v in zip(strata[1:], vector[1 + p : 1 + p + len(strata) - 1])})
    sigma = math.exp(vector[-1]) if template.family.has_free_scale else 1.0
    return AftSpec(
        family=template.family,
        beta=tuple(vector[1 : 1 + p]),
        mu=float(vector[0]),
        sigma=sigma,
        strata_offsets=offsets,
    )


def _check_dimensions(spec: AftSpec, data: Dataset) -> None:
    if len(spec.beta) != len(data.covariate_names):
        raise DimensionMismatchError(
            f"model has {len(spec.beta)} coefficients but data has {len(data.covariate_names)} covariates"
        )


def log_likelihood(spec: AftSpec, data: Dataset) -> float:
    _check_dimensions(spec, data)
    labels = strata_labels(data, spec)
    eta = spec.location(data.design_matrix(), labels if spec.strata_offsets else None)
    terms = subject_terms(spec.family, eta, spec.sigma, data)
    if terms.clamped.any():
        return LOGLIK_SENTINEL
    return float(np.sum(terms.loglik))


def log_likelihood_gradient(spec: AftSpec, data: Dataset) -> np.ndarray:
    """Analytic score in the :func:`parameter_vector` coordinates."""
    _check_dimensions(spec, data)
    labels = strata_labels(data, spec)
    eta = spec.location(data.design_matrix(), labels if spec.strata_offsets else None)
    terms = subject_terms(spec.family, eta, spec.sigma, data)
    design = np.column_stack(
        [np.ones(len(data)), data.design_matrix(), strata_dummies(labels, tuple(sorted(spec.strata_offsets)))]
    )
    gradient = design.T @ terms.d_eta
    if spec.family.has_free_scale:
        gradient = np.append(gradient, terms.d_log_sigma.sum())
    return gradient


# Fitting ----------------------------------------------------------------


class _LikelihoodProblem:
    """Mean negative log-likelihood over standardized covariates."""

    def __init__(self, data: Dataset, family: FamilyKind, floor: float) -> None:
        self.data = data
        self.family = family
        self.floor = floor
        arrays = data.outcome_arrays()
        self.exact, self.t, self.l, self.u = arrays.exact, arrays.t, arrays.l, arrays.u
        self.n = len(data)

        x = data.design_matrix()
        self.means = x.mean(axis=0)
        self.scales = x.std(axis=0)
        flat = [name for name, scale in zip(data.covariate_names, self.scales) if scale <= 0]
        if flat:
            raise RankDeficientError(f"covariate {flat[0]!r} has zero variance", covariate=flat[0])
        standardized = (x - self.means) / self.scales

        labels = strata_labels(data)
        self.strata = data.strata
        self.design = np.column_stack(
            [np.ones(self.n), standardized, strata_dummies(labels, self.strata)]
        )
        rank = np.linalg.matrix_rank(self.design)
        if rank < self.design.shape[1]:
            raise RankDeficientError(
                f"design matrix has rank {rank} < {self.design.shape[1]} columns",
                rank=int(rank),
            )
        self.n_linear = self.design.shape[1]

    def split(self, theta: np.ndarray) -> tuple[np.ndarray, float]:
        eta = self.design @ theta[: self.n_linear]
        sigma = math.exp(theta[-1]) if self.family.has_free_scale else 1.0
        return eta, sigma

    def terms(self, theta: np.ndarray, floor: float | None) -> TermScores:
        eta, sigma = self.split(theta)
        return _terms(self.family, eta, sigma, self.exact, self.t, self.l, self.u, floor)

    def objective(self, theta: np.ndarray) -> float:
        return -float(np.mean(self.terms(theta, self.floor).loglik))

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        terms = self.terms(theta, self.floor)
        gradient = self.design.T @ terms.d_eta
        if self.family.has_free_scale:
            gradient = np.append(gradient, terms.d_log_sigma.sum())
        return -gradient / self.n

    def start(self) -> np.ndarray:
        proxy = np.where(
            self.exact,
            self.t,
            np.where(np.isinf(self.u), self.l, (self.l + self.u) / 2.0),
        )
        proxy = proxy[np.isfinite(proxy) & (proxy > 0)]
        center = math.log(float(np.median(proxy))) if proxy.size else 0.0
        theta = np.zeros(self.n_linear + int(self.family.has_free_scale))
        theta[0] = center
        return theta

    def to_spec(self, theta: np.ndarray) -> AftSpec:
        p = self.means.size
        beta_std = theta[1 : 1 + p]
        beta = beta_std / self.scales
        mu = theta[0] - float(np.sum(beta * self.means))
        offsets = {}
        if self.strata:
            offsets = {self.strata[0]: 0.0}
            offsets.update({s: float(v) for s, v in zip(self.strata[1:], theta[1 + p : self.n_linear])})
        sigma = math.exp(theta[-1]) if self.family.has_free_scale else 1.0
        return AftSpec(family=self.family, beta=tuple(beta), mu=float(mu), sigma=sigma, strata_offsets=offsets)


def check_identifiable(data: Dataset) -> None:
    arrays = data.outcome_arrays()
    informative = arrays.exact | (arrays.l > 0) | np.isfinite(arrays.u)
    if not informative.any():
        raise DegenerateDataError("no informative outcome: every interval is (0, inf)")
    if arrays.exact.any():
        return
    if np.all(np.isinf(arrays.u)):
        raise DegenerateDataError("all outcomes are right-censored")
    if np.all(arrays.l == 0):
        raise DegenerateDataError("all outcomes are left-censored")
    if np.all(arrays.l == arrays.l[0]) and np.all(arrays.u == arrays.u[0]):
        raise DegenerateDataError("all outcomes are censored to the same interval")


def fit(data: Dataset, family: str | FamilyKind, options: FitOptions | None = None) -> FittedModel:
    family = parse_family(family)
    options = options or FitOptions()
    check_identifiable(data)
    floor = float(psr_setting("PROBABILITY_FLOOR"))
    problem = _LikelihoodProblem(data, family, floor)
    theta0 = problem.start()

    logger.info(
        "Fitting %s AFT model (n=%d, covariates=%d, strata=%d, optimizer=%s)",
        family.value, problem.n, len(data.covariate_names), len(problem.strata), options.optimizer.value,
    )

    if options.optimizer is Optimizer.QUASI_NEWTON:
        result = minimize(
            problem.objective,
            theta0,
            jac=problem.gradient if options.analytic_gradient else None,
            method="L-BFGS-B",
            options={
                "maxiter": options.max_iterations,
                "maxfun": options.max_iterations * 20,
                "ftol": options.rel_tol,
                "gtol": options.gradient_tol * 0.1,
            },
        )
    else:
        result = minimize(
            problem.objective,
            theta0,
            method="Nelder-Mead",
            options={
                "maxiter": options.max_iterations,
                "maxfev": options.max_iterations * 20,
                "fatol": options.rel_tol,
                "xatol": 1e-8,
                "adaptive": True,
            },
        )

    theta = np.asarray(result.x, dtype=float)
    clamped = int(problem.terms(theta, floor).clamped.sum())
    gradient_norm = float(np.linalg.norm(problem.gradient(theta)))
    if not np.isfinite(gradient_norm):
        gradient_norm = math.inf
    converged = bool(result.success) and gradient_norm < options.gradient_tol and clamped == 0

    spec = problem.to_spec(theta)
    loglik = log_likelihood(spec, data)
    message = str(result.message)
    if clamped:
        message = f"{message}; {clamped} outcome(s) at the probability floor"
    if not converged:
        logger.warning(
            "Fit did not converge after %d iterations (gradient norm %.3g): %s",
            result.nit, gradient_norm, message,
        )
    else:
        logger.info("Fit converged in %d iterations, loglik=%.6f", result.nit, loglik)
    logger.debug("Optimizer result: %s", result)

    return FittedModel(
        spec=spec,
        loglik=loglik,
        converged=converged,
        iterations=int(result.nit),
        gradient_norm=gradient_norm,
        covariate_names=tuple(data.covariate_names),
        options=options,
        message=message,
        n_observations=len(data),
    )


def fit_with_basis(data: Dataset, family, options: FitOptions | None = None, basis=()) -> FittedModel:
    expanded, resolved = expand_covariates(data, list(basis))
    model = fit(expanded, family, options)
    return replace(model, basis=tuple(resolved))


def model_dataset(model: FittedModel, data: Dataset) -> Dataset:
    """Replay the model's covariate basis on ``data`` unless it is already expanded."""
    if tuple(data.covariate_names) == tuple(model.covariate_names):
        return data
    if model.basis:
        expanded, _ = expand_covariates(data, list(model.basis))
        if tuple(expanded.covariate_names) == tuple(model.covariate_names):
            return expanded
    raise DimensionMismatchError(
        f"data covariates {list(data.covariate_names)} do not match model covariates {list(model.covariate_names)}"
    )


def source_covariates(model: FittedModel) -> tuple[str, ...]:
    """Raw data columns the model reads, in design order."""
    produced = {name: spec.column for spec in model.basis for name in spec.column_names()}
    columns: list[str] = []
    for name in model.covariate_names:
        column = produced.get(name, name)
        if column not in columns:
            columns.append(column)
    return tuple(columns)


def fitted_distribution(model: FittedModel, data: Dataset) -> LifetimeDistribution:
    """All subjects' fitted CDFs as one handle with a location per row."""
    data = model_dataset(model, data)
    labels = strata_labels(data, model.spec)
    eta = model.spec.location(data.design_matrix(), labels if model.spec.strata_offsets else None)
    return LifetimeDistribution(model.spec.family, eta, model.spec.sigma)


def fitted_cdf_per_subject(model: FittedModel, data: Dataset) -> list[LifetimeDistribution]:
    handle = fitted_distribution(model, data)
    return [LifetimeDistribution(handle.kind, float(mu), handle.sigma) for mu in np.atleast_1d(handle.mu)]
