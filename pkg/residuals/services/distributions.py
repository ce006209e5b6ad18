"""
Parametric event-time families on the log-time scale.

Every family is written as ``log T = mu + sigma * W`` with a standardized
error law ``W``: minimum extreme value (exponential, Weibull), normal
(log-normal) or logistic (log-logistic). The same handle serves as a
subject-specific fitted CDF once ``mu`` absorbs the covariate effect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import stats

from ..exceptions import InvalidParameterError, UnknownStratumError, DimensionMismatchError


class FamilyKind(str, Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    LOGNORMAL = "lognormal"
    LOGLOGISTIC = "loglogistic"

    @property
    def has_free_scale(self) -> bool:
        return self is not FamilyKind.EXPONENTIAL


ERROR_LAWS = {
    FamilyKind.EXPONENTIAL: stats.gumbel_l,
    FamilyKind.WEIBULL: stats.gumbel_l,
    FamilyKind.LOGNORMAL: stats.norm,
    FamilyKind.LOGLOGISTIC: stats.logistic,
}


def parse_family(value: str | FamilyKind) -> FamilyKind:
    if isinstance(value, FamilyKind):
        return value
    try:
        return FamilyKind(str(value).strip().lower().replace("-", "").replace("_", ""))
    except ValueError:
        choices = ", ".join(kind.value for kind in FamilyKind)
        raise InvalidParameterError(f"unknown distribution {value!r}; expected one of {choices}") from None


def error_score(kind: FamilyKind, w: np.ndarray) -> np.ndarray:
    """Derivative of the standardized log-density at ``w``."""
    if kind is FamilyKind.LOGNORMAL:
        return -w
    if kind is FamilyKind.LOGLOGISTIC:
        return 1.0 - 2.0 * stats.logistic.cdf(w)
    return 1.0 - np.exp(w)


@dataclass(frozen=True)
class LifetimeDistribution:
    """
    Absolutely continuous lifetime law ``F(t) = F_W((log t - mu) / sigma)``.

    ``mu`` may be an array; every method broadcasts over it, which is how a
    whole dataset's fitted CDFs are evaluated at once.
    """

    kind: FamilyKind
    mu: float | np.ndarray
    sigma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", parse_family(self.kind))
        if not np.all(np.isfinite(self.mu)):
            raise InvalidParameterError("location must be finite")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"scale must be positive, got {self.sigma!r}")
        if self.kind is FamilyKind.EXPONENTIAL and self.sigma != 1.0:
            raise InvalidParameterError("the exponential family has unit log-scale")

    # Constructors from natural parameters ------------------------------

    @classmethod
    def exponential(cls, rate: float = 1.0) -> LifetimeDistribution:
        _require_positive(rate=rate)
        return cls(FamilyKind.EXPONENTIAL, -math.log(rate), 1.0)

    @classmethod
    def weibull(cls, shape: float, scale: float = 1.0) -> LifetimeDistribution:
        _require_positive(shape=shape, scale=scale)
        return cls(FamilyKind.WEIBULL, math.log(scale), 1.0 / shape)

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> LifetimeDistribution:
        _require_positive(sigma=sigma)
        return cls(FamilyKind.LOGNORMAL, float(mu), float(sigma))

    @classmethod
    def loglogistic(cls, shape: float, scale: float = 1.0) -> LifetimeDistribution:
        _require_positive(shape=shape, scale=scale)
        return cls(FamilyKind.LOGLOGISTIC, math.log(scale), 1.0 / shape)

    @classmethod
    def from_parameters(cls, kind: str | FamilyKind, **params: float) -> LifetimeDistribution:
        kind = parse_family(kind)
        try:
            if kind is FamilyKind.EXPONENTIAL:
                return cls.exponential(params.get("rate", params.get("lambda", 1.0)))
            if kind is FamilyKind.WEIBULL:
                return cls.weibull(params["shape"], params.get("scale", 1.0))
            if kind is FamilyKind.LOGNORMAL:
                return cls.lognormal(params.get("mu", 0.0), params["sigma"])
            return cls.loglogistic(params["shape"], params.get("scale", 1.0))
        except KeyError as exc:
            raise InvalidParameterError(f"{kind.value} needs parameter {exc.args[0]!r}") from None

    def natural_parameters(self) -> dict[str, float]:
        mu = float(np.asarray(self.mu))
        if self.kind is FamilyKind.EXPONENTIAL:
            return {"rate": math.exp(-mu)}
        if self.kind is FamilyKind.LOGNORMAL:
            return {"mu": mu, "sigma": self.sigma}
        return {"shape": 1.0 / self.sigma, "scale": math.exp(mu)}

    # Evaluation --------------------------------------------------------

    @property
    def law(self):
        return ERROR_LAWS[self.kind]

    def standardize(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(np.isnan(t)):
            raise InvalidParameterError("times must be nonnegative")
        with np.errstate(divide="ignore"):
            return (np.log(t) - self.mu) / self.sigma

    def cdf(self, t):
        return _scalar(self.law.cdf(self.standardize(t)))

    def sf(self, t):
        return _scalar(self.law.sf(self.standardize(t)))

    def logcdf(self, t):
        return _scalar(self.law.logcdf(self.standardize(t)))

    def logsf(self, t):
        return _scalar(self.law.logsf(self.standardize(t)))

    def log_density(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise InvalidParameterError("log-density needs t > 0")
        w = self.standardize(t)
        return _scalar(self.law.logpdf(w) - math.log(self.sigma) - np.log(t))

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0) or np.any(p >= 1) or np.any(np.isnan(p)):
            raise InvalidParameterError("quantile level must lie in (0, 1)")
        return _scalar(np.exp(self.mu + self.sigma * self.law.ppf(p)))

    def log_interval_prob(self, l, u):
        """``log(F(u) - F(l))`` evaluated on whichever tail keeps precision."""
        l, u = _validate_interval(l, u)
        return _scalar(log_interval_prob_standardized(self.law, self.standardize(l), self.standardize(u)))

    def interval_prob(self, l, u):
        return _scalar(np.exp(self.log_interval_prob(l, u)))

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        return np.exp(self.mu + self.sigma * self.law.ppf(rng.random(size)))


def log_interval_prob_standardized(law, w_l: np.ndarray, w_u: np.ndarray) -> np.ndarray:
    w_l, w_u = np.broadcast_arrays(np.asarray(w_l, dtype=float), np.asarray(w_u, dtype=float))
    upper_tail = law.sf(w_l) < 0.5
    with np.errstate(divide="ignore", invalid="ignore"):
        logsf_l = law.logsf(w_l)
        logsf_u = law.logsf(w_u)
        logcdf_l = law.logcdf(w_l)
        logcdf_u = law.logcdf(w_u)
        via_survival = logsf_l + np.log1p(-np.exp(logsf_u - logsf_l))
        via_cdf = logcdf_u + np.log1p(-np.exp(logcdf_l - logcdf_u))
        result = np.where(upper_tail, via_survival, via_cdf)
    return np.where(np.isnan(result), -np.inf, result)


@dataclass(frozen=True)
class AftSpec:
    """``log T = mu + beta'z + offset[stratum] + sigma W``."""

    family: FamilyKind
    beta: tuple[float, ...] = ()
    mu: float = 0.0
    sigma: float = 1.0
    strata_offsets: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "family", parse_family(self.family))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"scale must be positive, got {self.sigma!r}")
        if self.family is FamilyKind.EXPONENTIAL and self.sigma != 1.0:
            raise InvalidParameterError("the exponential family has unit log-scale")

    @property
    def reference_stratum(self) -> str | None:
        if not self.strata_offsets:
            return None
        return sorted(self.strata_offsets)[0]

    def offset(self, stratum: str | None) -> float:
        if not self.strata_offsets:
            return 0.0
        if stratum not in self.strata_offsets:
            raise UnknownStratumError(f"unknown stratum {stratum!r}", stratum=stratum)
        return self.strata_offsets[stratum]

    def location(self, z, strata=None) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[-1] != len(self.beta):
            raise DimensionMismatchError(f"expected {len(self.beta)} covariates, got {z.shape[-1]}")
        loc = self.mu + z @ np.asarray(self.beta, dtype=float)
        if strata is not None:
            loc = loc + np.array([self.offset(s) for s in strata])
        elif self.strata_offsets:
            raise UnknownStratumError("model is stratified but no stratum was given")
        return loc


def subject_cdf(model: AftSpec, z, stratum: str | None = None) -> LifetimeDistribution:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != len(model.beta):
        raise DimensionMismatchError(f"expected {len(model.beta)} covariates, got {z.size}")
    loc = model.mu + float(z @ np.asarray(model.beta, dtype=float)) + model.offset(stratum)
    return LifetimeDistribution(model.family, loc, model.sigma)


def cdf(family: LifetimeDistribution, t):
    return family.cdf(t)


def interval_prob(family: LifetimeDistribution, l, u):
    return family.interval_prob(l, u)


def log_density(family: LifetimeDistribution, t):
    return family.log_density(t)


def quantile(family: LifetimeDistribution, p):
    return family.quantile(p)


def _validate_interval(l, u):
    l = np.asarray(l, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(l < 0) or np.any(l >= u) or np.any(np.isinf(l)):
        raise InvalidParameterError("interval needs 0 <= l < u")
    return l, u


def _require_positive(**params: float) -> None:
    for name, value in params.items():
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
            raise InvalidParameterError(f"{name} must be positive, got {value!r}")


def _scalar(value):
    array = np.asarray(value)
    if array.ndim == 0:
        return float(array)
    return array
