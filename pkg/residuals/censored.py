"""Data model for mixed-censored time-to-event observations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionMismatchError, InvalidOutcomeError


class OutcomeKind(str, Enum):
    EXACT = "exact"
    INTERVAL = "interval"
    LEFT = "left"
    RIGHT = "right"


class OutcomeClass(str, Enum):
    EXACT = "exact"
    INTERVAL = "interval"
    LEFT = "left"
    RIGHT = "right"


@dataclass(frozen=True, slots=True)
class Outcome:
    """Exact time ``t`` or the half-open interval ``(l, u]`` (``u`` may be inf)."""

    kind: OutcomeKind
    t: float | None = None
    l: float = 0.0
    u: float = math.inf

    def __post_init__(self) -> None:
        if self.kind is OutcomeKind.EXACT:
            if self.t is None or not math.isfinite(self.t) or self.t <= 0:
                raise InvalidOutcomeError(f"exact time must be a positive finite number, got {self.t!r}")
            return
        if self.t is not None:
            raise InvalidOutcomeError("censored outcomes carry no exact time")
        if math.isnan(self.l) or math.isnan(self.u):
            raise InvalidOutcomeError("interval endpoints must not be NaN")
        if self.l < 0 or math.isinf(self.l):
            raise InvalidOutcomeError(f"lower endpoint must be finite and >= 0, got {self.l!r}")
        if self.l >= self.u:
            raise InvalidOutcomeError(f"degenerate interval ({self.l!r}, {self.u!r}]")
        if self.kind is OutcomeKind.INTERVAL and math.isinf(self.u):
            raise InvalidOutcomeError("interval outcome needs a finite upper endpoint")
        if self.kind is OutcomeKind.LEFT and (self.l != 0 or math.isinf(self.u)):
            raise InvalidOutcomeError("left-censored outcome must be (0, u] with finite u")
        if self.kind is OutcomeKind.RIGHT and not math.isinf(self.u):
            raise InvalidOutcomeError("right-censored outcome must have an infinite upper endpoint")

    @classmethod
    def exact(cls, t: float) -> Outcome:
        return cls(OutcomeKind.EXACT, t=float(t), l=0.0, u=math.inf)

    @classmethod
    def interval(cls, l: float, u: float) -> Outcome:
        return cls(OutcomeKind.INTERVAL, l=float(l), u=float(u))

    @classmethod
    def left(cls, u: float) -> Outcome:
        return cls(OutcomeKind.LEFT, l=0.0, u=float(u))

    @classmethod
    def right(cls, l: float) -> Outcome:
        return cls(OutcomeKind.RIGHT, l=float(l), u=math.inf)

    @classmethod
    def from_endpoints(cls, l: float, u: float) -> Outcome:
        """Build a censored outcome, tagging it by its endpoints."""
        if math.isinf(u):
            return cls.right(l)
        if l == 0:
            return cls.left(u)
        return cls.interval(l, u)

    @property
    def is_exact(self) -> bool:
        return self.kind is OutcomeKind.EXACT


def classify(outcome: Outcome) -> OutcomeClass:
    # (0, inf) has no information and is reported as right-censored.
    if outcome.is_exact:
        return OutcomeClass.EXACT
    if math.isinf(outcome.u):
        return OutcomeClass.RIGHT
    if outcome.l == 0:
        return OutcomeClass.LEFT
    return OutcomeClass.INTERVAL


@dataclass(frozen=True, slots=True)
class Observation:
    id: str
    outcome: Outcome
    covariates: tuple[float, ...] = ()
    stratum: str | None = None

    def __post_init__(self) -> None:
        if not all(math.isfinite(value) for value in self.covariates):
            raise InvalidOutcomeError(f"observation {self.id!r} has non-finite covariate values")


@dataclass(frozen=True, slots=True)
class OutcomeArrays:
    exact: np.ndarray
    t: np.ndarray
    l: np.ndarray
    u: np.ndarray


@dataclass(frozen=True)
class Dataset:
    observations: tuple[Observation, ...]
    covariate_names: tuple[str, ...] = ()
    _strata: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "observations", tuple(self.observations))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        if not self.observations:
            raise InvalidOutcomeError("dataset is empty")
        width = len(self.covariate_names)
        seen: set[str] = set()
        for observation in self.observations:
            if len(observation.covariates) != width:
                raise DimensionMismatchError(
                    f"observation {observation.id!r} has {len(observation.covariates)} covariates, expected {width}"
                )
            if observation.id in seen:
                raise InvalidOutcomeError(f"duplicate observation id {observation.id!r}")
            seen.add(observation.id)
        strata = sorted({obs.stratum for obs in self.observations if obs.stratum is not None})
        object.__setattr__(self, "_strata", tuple(strata))

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    @property
    def ids(self) -> list[str]:
        return [obs.id for obs in self.observations]

    @property
    def strata(self) -> tuple[str, ...]:
        """Distinct stratum labels in sorted order; the first is the reference."""
        return self._strata

    @property
    def outcomes(self) -> list[Outcome]:
        return [obs.outcome for obs in self.observations]

    def classes(self) -> list[OutcomeClass]:
        return [classify(obs.outcome) for obs in self.observations]

    def design_matrix(self) -> np.ndarray:
        return np.array([obs.covariates for obs in self.observations], dtype=float).reshape(
            len(self.observations), len(self.covariate_names)
        )

    def covariate(self, name: str) -> np.ndarray:
        try:
            index = self.covariate_names.index(name)
        except ValueError:
            raise DimensionMismatchError(f"unknown covariate {name!r}") from None
        return self.design_matrix()[:, index]

    def outcome_arrays(self) -> OutcomeArrays:
        exact = np.array([obs.outcome.is_exact for obs in self.observations], dtype=bool)
        t = np.array([obs.outcome.t if obs.outcome.is_exact else np.nan for obs in self.observations])
        l = np.array([obs.outcome.l for obs in self.observations], dtype=float)
        u = np.array([obs.outcome.u for obs in self.observations], dtype=float)
        return OutcomeArrays(exact=exact, t=t, l=l, u=u)

    def with_covariates(self, names: Sequence[str], matrix: np.ndarray) -> Dataset:
        rows = np.asarray(matrix, dtype=float).reshape(len(self.observations), len(names))
        return Dataset(
            observations=tuple(
                Observation(obs.id, obs.outcome, tuple(float(v) for v in row), obs.stratum)
                for obs, row in zip(self.observations, rows)
            ),
            covariate_names=tuple(names),
        )

    def subset(self, indices: Iterable[int]) -> Dataset:
        """Rows at ``indices``; repeated indices get suffixed ids so they stay unique."""
        picked: list[Observation] = []
        counts: dict[str, int] = {}
        for index in indices:
            obs = self.observations[int(index)]
            seen = counts.get(obs.id, 0)
            counts[obs.id] = seen + 1
            new_id = obs.id if seen == 0 else f"{obs.id}#{seen}"
            picked.append(Observation(new_id, obs.outcome, obs.covariates, obs.stratum))
        return Dataset(observations=tuple(picked), covariate_names=self.covariate_names)
