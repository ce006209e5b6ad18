"""
Seedable generators for censored event-time data and the Monte Carlo
harness that checks residual properties against their theoretical values.

Event times and inspection processes come from independent streams of one
:class:`SeededStreams`, cut into fixed-size shards so the output does not
depend on the thread count.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..censored import Dataset, Observation, Outcome
from ..exceptions import EmptySampleError, InvalidParameterError, PsrError
from .distributions import AftSpec, FamilyKind, LifetimeDistribution
from .fitting import (
    FitOptions,
    FittedModel,
    fit,
    fitted_distribution,
    model_dataset,
    parameter_names,
    parameter_vector,
)
from .moments import SchemeMoments, scheme_variance
from .psr import psr_arrays
from .random_streams import (
    COVARIATE_STREAM,
    EVENT_STREAM,
    SCHEME_STREAM,
    SeededStreams,
    map_shards,
    shards,
)
from .schemes import InspectionScheme

logger = logging.getLogger(__name__)

AGREEMENT_Z = 4.0


@dataclass(frozen=True)
class SimulatedSample:
    """Array form of a simulated sample: true times plus what was observed."""

    t: np.ndarray
    exact: np.ndarray
    l: np.ndarray
    u: np.ndarray
    k: np.ndarray
    j: np.ndarray

    def __len__(self) -> int:
        return self.t.size

    def outcome(self, index: int) -> Outcome:
        if self.exact[index]:
            return Outcome.exact(float(self.t[index]))
        return Outcome.from_endpoints(float(self.l[index]), float(self.u[index]))

    def outcomes(self) -> list[Outcome]:
        return [self.outcome(index) for index in range(len(self))]

    def psr(self, F: LifetimeDistribution) -> np.ndarray:
        return psr_arrays(F, self.exact, self.t, self.l, self.u)


@dataclass(frozen=True)
class SimResult:
    sample: SimulatedSample
    psr: np.ndarray
    seed: int
    empirical_mean: float
    empirical_variance: float
    ks_vs_uniform: float | None = None

    @property
    def n(self) -> int:
        return len(self.sample)

    @property
    def records(self) -> list[tuple[Outcome, float]]:
        return list(zip(self.sample.outcomes(), (float(value) for value in self.psr)))


@dataclass(frozen=True)
class MomentReport:
    scheme: str
    n: int
    seed: int
    empirical_mean: float
    mean_standard_error: float
    theoretical_variance: float
    theoretical_standard_error: float
    empirical_variance: float
    variance_standard_error: float
    theoretical_mean: float = 0.0
    ks_vs_uniform: float | None = None
    moments: SchemeMoments | None = None

    @property
    def mean_z(self) -> float:
        return _z(self.empirical_mean - self.theoretical_mean, self.mean_standard_error)

    @property
    def variance_z(self) -> float:
        se = math.hypot(self.variance_standard_error, self.theoretical_standard_error)
        return _z(self.empirical_variance - self.theoretical_variance, se)

    @property
    def agrees(self) -> bool:
        return abs(self.mean_z) <= AGREEMENT_Z and abs(self.variance_z) <= AGREEMENT_Z


@dataclass(frozen=True)
class BootstrapResult:
    parameter_names: list[str]
    estimate: np.ndarray
    replicates: np.ndarray
    failures: int
    seed: int
    standard_errors: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        se = np.std(self.replicates, axis=0, ddof=1) if len(self.replicates) > 1 else np.full(self.estimate.shape, np.nan)
        object.__setattr__(self, "standard_errors", se)


def _z(difference: float, se: float) -> float:
    if se > 0:
        return difference / se
    return 0.0 if difference == 0 else math.copysign(math.inf, difference)


def _as_streams(seed: int | SeededStreams, scheme_seed: int | None = None) -> SeededStreams:
    if isinstance(seed, SeededStreams):
        return seed
    return SeededStreams(seed, scheme_seed)


def _shard_law(F: LifetimeDistribution, start: int, stop: int) -> LifetimeDistribution:
    if np.ndim(F.mu) == 0:
        return F
    return LifetimeDistribution(F.kind, np.asarray(F.mu)[start:stop], F.sigma)


# Generators --------------------------------------------------------------


def simulate_sample(
    F_event: LifetimeDistribution,
    scheme: InspectionScheme,
    n: int,
    seed: int | SeededStreams,
    scheme_seed: int | None = None,
    threads: int | None = None,
) -> SimulatedSample:
    """
    Draw ``T ~ F_event`` and an independent inspection process per subject,
    then observe ``T`` exactly with probability ``pi_j`` or as the
    inspection interval containing it.

    ``F_event`` may carry one location per subject (length ``n``).
    """
    if n < 1:
        raise InvalidParameterError("sample size must be positive")
    if np.ndim(F_event.mu) and np.size(F_event.mu) != n:
        raise InvalidParameterError(f"expected {n} subject locations, got {np.size(F_event.mu)}")
    streams = _as_streams(seed, scheme_seed)

    def run(shard):
        law = _shard_law(F_event, shard.start, shard.stop)
        t = law.sample(shard.size, streams.generator(EVENT_STREAM, shard.index))
        scheme_rng = streams.generator(SCHEME_STREAM, shard.index)
        inspections = scheme.sample_inspections(shard.size, scheme_rng)
        j = inspections.locate(t)
        l, u = inspections.bounds(j)
        exact = scheme_rng.random(shard.size) < scheme.pi_at(j)
        return t, exact, np.where(exact, 0.0, l), np.where(exact, np.inf, u), inspections.k, j

    parts = map_shards(run, shards(n), threads)
    columns = [np.concatenate(column) for column in zip(*parts)]
    return SimulatedSample(*columns)


def simulate_outcomes(
    F_event: LifetimeDistribution,
    scheme: InspectionScheme,
    n: int,
    seed: int | SeededStreams,
    threads: int | None = None,
) -> list[Outcome]:
    return simulate_sample(F_event, scheme, n, seed, threads=threads).outcomes()


def dataset_from_sample(
    sample: SimulatedSample,
    covariates: np.ndarray | None = None,
    covariate_names=(),
    strata=None,
) -> Dataset:
    n = len(sample)
    matrix = np.zeros((n, 0)) if covariates is None else np.asarray(covariates, dtype=float).reshape(n, -1)
    observations = tuple(
        Observation(
            id=str(index + 1),
            outcome=sample.outcome(index),
            covariates=tuple(float(v) for v in matrix[index]),
            stratum=None if strata is None else strata[index],
        )
        for index in range(n)
    )
    return Dataset(observations=observations, covariate_names=tuple(covariate_names))


def simulate_dataset(
    spec: AftSpec,
    scheme: InspectionScheme,
    n: int,
    seed: int | SeededStreams,
    covariates: np.ndarray | None = None,
    covariate_names=None,
    strata=None,
    threads: int | None = None,
) -> tuple[Dataset, SimulatedSample]:
    """
    AFT data under ``scheme``; covariates default to independent standard
    normals drawn from their own stream.
    """
    streams = _as_streams(seed)
    p = len(spec.beta)
    if covariates is None:
        covariates = streams.generator(COVARIATE_STREAM).standard_normal((n, p))
    covariates = np.asarray(covariates, dtype=float).reshape(n, p)
    names = tuple(covariate_names or (f"z{index + 1}" for index in range(p)))
    locations = spec.location(covariates, strata if spec.strata_offsets else None)
    law = LifetimeDistribution(spec.family, locations, spec.sigma)
    sample = simulate_sample(law, scheme, n, streams, threads=threads)
    return dataset_from_sample(sample, covariates, names, strata), sample


# Property checks ---------------------------------------------------------


def ks_uniform(samples) -> float:
    """Two-sided KS statistic of ``samples`` against ``U(-1, 1)``."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if samples.size == 0:
        raise EmptySampleError("KS statistic needs at least one value")
    return float(stats.kstest(samples, stats.uniform(loc=-1.0, scale=2.0).cdf).statistic)


def run_simulation(
    F_event: LifetimeDistribution,
    scheme: InspectionScheme,
    n: int,
    seed: int,
    scheme_seed: int | None = None,
    threads: int | None = None,
) -> SimResult:
    """Simulate under ``scheme`` and score every outcome with the true ``F_event``."""
    sample = simulate_sample(F_event, scheme, n, seed, scheme_seed, threads)
    psr = sample.psr(F_event)
    ks = ks_uniform(psr) if bool(np.all(sample.exact)) else None
    logger.info("Simulated %d outcomes under %s (%d exact)", n, scheme.label, int(sample.exact.sum()))
    return SimResult(
        sample=sample,
        psr=psr,
        seed=seed,
        empirical_mean=float(np.mean(psr)),
        empirical_variance=float(np.var(psr)),
        ks_vs_uniform=ks,
    )


def verify_properties(
    F_event: LifetimeDistribution,
    scheme: InspectionScheme,
    n: int,
    seed: int,
    draws: int | None = None,
    threads: int | None = None,
) -> MomentReport:
    """Empirical mean and variance of the true-model residual against their theoretical values."""
    result = run_simulation(F_event, scheme, n, seed, threads=threads)
    moments = scheme_variance(F_event, scheme, draws=draws, seed=seed, threads=threads)
    centred = result.psr - result.empirical_mean
    report = MomentReport(
        scheme=scheme.label,
        n=result.n,
        seed=seed,
        empirical_mean=result.empirical_mean,
        mean_standard_error=float(np.std(result.psr, ddof=1) / math.sqrt(result.n)) if result.n > 1 else math.inf,
        theoretical_variance=moments.variance,
        theoretical_standard_error=moments.standard_error,
        empirical_variance=result.empirical_variance,
        variance_standard_error=float(np.std(centred**2, ddof=1) / math.sqrt(result.n)) if result.n > 1 else math.inf,
        ks_vs_uniform=result.ks_vs_uniform,
        moments=moments,
    )
    if not report.agrees:
        logger.warning(
            "Scheme %s disagrees with theory beyond %.0f SE (mean z=%.2f, variance z=%.2f)",
            scheme.label, AGREEMENT_Z, report.mean_z, report.variance_z,
        )
    return report


# Bootstrap ---------------------------------------------------------------


def parametric_bootstrap(
    model: FittedModel,
    data: Dataset,
    scheme: InspectionScheme,
    replicates: int,
    seed: int,
    options: FitOptions | None = None,
    threads: int | None = None,
) -> BootstrapResult:
    """
    Refit the model to ``replicates`` datasets simulated from itself at the
    observed covariates, censored by ``scheme``.
    """
    if replicates < 2:
        raise InvalidParameterError("bootstrap needs at least 2 replicates")
    data = model_dataset(model, data)
    law = fitted_distribution(model, data)
    strata = [obs.stratum for obs in data] if model.spec.strata_offsets else None
    covariates = data.design_matrix()
    options = options or model.options
    base = SeededStreams(seed)

    def replicate(shard):
        sample = simulate_sample(law, scheme, len(data), base.fork(shard.index), threads=1)
        refit_data = dataset_from_sample(sample, covariates, data.covariate_names, strata)
        try:
            refit = fit(refit_data, model.family, options)
        except PsrError as exc:
            logger.debug("Bootstrap replicate %d failed: %s", shard.index, exc)
            return None
        return parameter_vector(refit.spec) if refit.converged else None

    logger.info("Parametric bootstrap: %d replicates of n=%d (seed=%d)", replicates, len(data), seed)
    estimates = map_shards(replicate, shards(replicates, 1), threads)
    kept = [vector for vector in estimates if vector is not None and vector.size == parameter_vector(model.spec).size]
    failures = replicates - len(kept)
    if failures:
        logger.warning("%d of %d bootstrap replicates failed to converge", failures, replicates)
    return BootstrapResult(
        parameter_names=parameter_names(model.spec, model.covariate_names),
        estimate=parameter_vector(model.spec),
        replicates=np.vstack(kept) if kept else np.empty((0, parameter_vector(model.spec).size)),
        failures=failures,
        seed=seed,
    )


# Synthetic partly-interval-censored cohort -------------------------------

COHORT_SITES = ("A", "B", "C", "D", "E", "F", "G")
COHORT_SITE_OFFSETS = {"A": 0.0, "B": 0.3, "C": -0.2, "D": 0.1, "E": -0.3, "F": 0.2, "G": 0.0}
COHORT_COVARIATES = ("age", "male", "art_pi", "cd4")
# Share of events that are deaths (observed exactly) rather than visit-detected events.
COHORT_DEATH_SHARE = 143 / 328
COHORT_SQRT_CD4_BREAK = 18.0


@dataclass(frozen=True, slots=True)
class CohortTruth:
    """True log-time model of the synthetic cohort."""

    mu: float = 1.2
    age: float = -0.02
    male: float = -0.2
    art_pi: float = -0.1
    sqrt_cd4: float = 0.12
    sqrt_cd4_above_break: float = -0.10
    sigma: float = 0.8
    visit_gap: float = 0.5
    follow_up: tuple[float, float] = (2.0, 8.0)

    def location(self, covariates: np.ndarray, sites) -> np.ndarray:
        age, male, art_pi, cd4 = covariates.T
        root = np.sqrt(cd4)
        return (
            self.mu
            + self.age * (age - 38.0)
            + self.male * male
            + self.art_pi * art_pi
            + self.sqrt_cd4 * root
            + self.sqrt_cd4_above_break * np.maximum(root - COHORT_SQRT_CD4_BREAK, 0.0)
            + np.array([COHORT_SITE_OFFSETS[site] for site in sites])
        )


def synthetic_cohort(n: int = 1380, seed: int = 0, truth: CohortTruth | None = None) -> Dataset:
    """
    HIV-cohort-shaped data: deaths seen exactly, other events found between
    clinic visits, the rest right-censored at the last visit.

    Visits come every ``Uniform(0, visit_gap]`` years until administrative
    end of follow-up ``~ Uniform(follow_up)``, where a final visit closes
    the record. Event times follow a site-stratified Weibull AFT in age,
    sex, ART class and a piecewise-linear effect of ``sqrt(cd4)``.
    """
    if n < 1:
        raise InvalidParameterError("sample size must be positive")
    truth = truth or CohortTruth()
    streams = SeededStreams(seed)

    rng = streams.generator(COVARIATE_STREAM)
    age = np.clip(rng.normal(38.0, 10.0, n), 18.0, 80.0)
    male = (rng.random(n) < 0.6).astype(float)
    art_pi = (rng.random(n) < 0.3).astype(float)
    cd4 = np.round(np.clip(rng.normal(12.0, 5.0, n), 0.5, None) ** 2)
    sites = [COHORT_SITES[index] for index in rng.integers(0, len(COHORT_SITES), n)]
    covariates = np.column_stack([age, male, art_pi, cd4])

    law = LifetimeDistribution(FamilyKind.WEIBULL, truth.location(covariates, sites), truth.sigma)
    t = law.sample(n, streams.generator(EVENT_STREAM))

    scheme_rng = streams.generator(SCHEME_STREAM)
    end = scheme_rng.uniform(*truth.follow_up, n)
    death = scheme_rng.random(n) < COHORT_DEATH_SHARE
    width = int(math.ceil(truth.follow_up[1] / (truth.visit_gap * 0.05))) + 1
    visits = np.cumsum(truth.visit_gap * (1.0 - scheme_rng.random((n, width))), axis=1)

    observations = []
    for index in range(n):
        schedule = visits[index][visits[index] < end[index]]
        schedule = np.append(schedule, end[index])
        if t[index] <= end[index] and death[index]:
            outcome = Outcome.exact(float(t[index]))
        else:
            bounds = np.concatenate([[0.0], schedule, [math.inf]])
            j = int(np.sum(schedule < t[index]))
            outcome = Outcome.from_endpoints(float(bounds[j]), float(bounds[j + 1]))
        observations.append(
            Observation(
                id=str(index + 1),
                outcome=outcome,
                covariates=tuple(float(v) for v in covariates[index]),
                stratum=sites[index],
            )
        )
    dataset = Dataset(observations=tuple(observations), covariate_names=COHORT_COVARIATES)
    classes = dataset.classes()
    logger.info(
        "synthetic cohort: n=%d, exact=%d, interval=%d, right=%d",
        n,
        sum(c.value == "exact" for c in classes),
        sum(c.value in ("interval", "left") for c in classes),
        sum(c.value == "right" for c in classes),
    )
    return dataset
