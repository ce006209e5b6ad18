"""
Inspection schemes: the law of ``(K, C, pi)`` behind a censoring mechanism.

``K`` is the number of examinations, ``C_1 < ... < C_K`` their times built
from positive gaps, and ``pi_j`` the probability that an event falling in
``(C_j, C_{j+1}]`` is nevertheless observed exactly (``C_0 = 0`` and
``C_{K+1} = inf``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..exceptions import SchemeError
from .distributions import LifetimeDistribution

PRESETS = ("s1", "s2", "s3", "s4", "s5", "s6")


class CountKind(str, Enum):
    FIXED = "fixed"
    GEOMETRIC = "geometric"
    EMPIRICAL = "empirical"


class GapKind(str, Enum):
    UNIFORM = "uniform"
    FIXED = "fixed"
    LIFETIME = "lifetime"


@dataclass(frozen=True)
class CountDistribution:
    """Law of the examination count ``K`` on the positive integers."""

    kind: CountKind = CountKind.FIXED
    k: int = 1
    mean: float | None = None
    values: tuple[int, ...] = ()
    weights: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CountKind(self.kind))
        if self.kind is CountKind.FIXED and self.k < 1:
            raise SchemeError(f"fixed K must be >= 1, got {self.k!r}")
        if self.kind is CountKind.GEOMETRIC and not (self.mean is not None and self.mean >= 1):
            raise SchemeError(f"geometric K needs mean >= 1, got {self.mean!r}")
        if self.kind is CountKind.EMPIRICAL:
            if not self.values or len(self.values) != len(self.weights):
                raise SchemeError("empirical K needs matching values and weights")
            if any(int(v) < 1 for v in self.values):
                raise SchemeError("empirical K values must be >= 1")
            if any(w < 0 for w in self.weights) or not sum(self.weights) > 0:
                raise SchemeError("empirical K weights must be nonnegative with a positive total")

    @property
    def fixed_value(self) -> int | None:
        if self.kind is CountKind.FIXED:
            return self.k
        if self.kind is CountKind.GEOMETRIC and self.mean == 1:
            return 1
        return None

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind is CountKind.FIXED:
            return np.full(size, self.k, dtype=np.int64)
        if self.kind is CountKind.GEOMETRIC:
            return rng.geometric(1.0 / self.mean, size=size).astype(np.int64)
        weights = np.asarray(self.weights, dtype=float)
        return rng.choice(np.asarray(self.values, dtype=np.int64), size=size, p=weights / weights.sum())

    def to_dict(self) -> dict:
        if self.kind is CountKind.FIXED:
            return {"kind": self.kind.value, "k": self.k}
        if self.kind is CountKind.GEOMETRIC:
            return {"kind": self.kind.value, "mean": self.mean}
        return {"kind": self.kind.value, "values": list(self.values), "weights": list(self.weights)}


@dataclass(frozen=True)
class GapDistribution:
    """Law of the gaps ``C_j - C_{j-1}``: uniform on ``(0, tau]``, fixed ``tau``, or a lifetime family."""

    kind: GapKind = GapKind.UNIFORM
    tau: float = 1.0
    lifetime: LifetimeDistribution | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", GapKind(self.kind))
        if self.kind is GapKind.LIFETIME:
            if self.lifetime is None:
                raise SchemeError("lifetime gaps need a distribution")
        elif not (math.isfinite(self.tau) and self.tau > 0):
            raise SchemeError(f"gap tau must be positive, got {self.tau!r}")

    def sample(self, shape, rng: np.random.Generator) -> np.ndarray:
        if self.kind is GapKind.FIXED:
            return np.full(shape, self.tau)
        if self.kind is GapKind.UNIFORM:
            # 1 - U lies in (0, 1].
            return self.tau * (1.0 - rng.random(shape))
        return self.lifetime.sample(shape, rng)

    def quantile(self, s):
        s = np.asarray(s, dtype=float)
        if self.kind is GapKind.FIXED:
            return np.full(s.shape, self.tau)
        if self.kind is GapKind.UNIFORM:
            return self.tau * s
        return np.asarray(self.lifetime.quantile(s))

    def to_dict(self) -> dict:
        if self.kind is GapKind.LIFETIME:
            return {
                "kind": self.kind.value,
                "dist": self.lifetime.kind.value,
                "params": self.lifetime.natural_parameters(),
            }
        return {"kind": self.kind.value, "tau": self.tau}


@dataclass(frozen=True, slots=True)
class Inspections:
    """
    Sampled inspection processes, one row per subject.

    ``grid[i]`` is ``[0, C_1, ..., C_K, inf, ...]``: the ``K + 2`` real
    boundaries followed by ``inf`` padding up to the widest row.
    """

    k: np.ndarray
    grid: np.ndarray

    def locate(self, t: np.ndarray) -> np.ndarray:
        """Interval index ``j`` with ``C_j < t <= C_{j+1}``."""
        return np.sum(self.grid[:, 1:] < t[:, None], axis=1)

    def bounds(self, j: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        rows = np.arange(j.size)
        return self.grid[rows, j], self.grid[rows, j + 1]


@dataclass(frozen=True)
class InspectionScheme:
    k_dist: CountDistribution = field(default_factory=CountDistribution)
    gap_dist: GapDistribution = field(default_factory=GapDistribution)
    pi: tuple[float, ...] = (0.0,)
    preset: str | None = None
    label: str = "custom"

    def __post_init__(self) -> None:
        pi = tuple(float(p) for p in self.pi)
        if not pi:
            raise SchemeError("pi needs at least one entry")
        if any(not (0.0 <= p <= 1.0) for p in pi):
            raise SchemeError(f"pi entries must lie in [0, 1], got {list(pi)}")
        object.__setattr__(self, "pi", pi)
        if self.preset is not None:
            object.__setattr__(self, "preset", self.preset.lower())
            if self.preset not in PRESETS:
                raise SchemeError(f"unknown preset {self.preset!r}")

    @property
    def all_exact(self) -> bool:
        return all(p == 1.0 for p in self.pi)

    def pi_at(self, j) -> np.ndarray:
        """``pi_j``; a single entry broadcasts, and indices past the end reuse the last entry."""
        pis = np.asarray(self.pi, dtype=float)
        return pis[np.minimum(np.asarray(j), pis.size - 1)]

    def sample_inspections(self, size: int, rng: np.random.Generator) -> Inspections:
        k = self.k_dist.sample(size, rng)
        width = int(k.max()) if size else 1
        gaps = self.gap_dist.sample((size, width), rng)
        times = np.cumsum(gaps, axis=1)
        times = np.where(np.arange(width)[None, :] < k[:, None], times, np.inf)
        grid = np.hstack([np.zeros((size, 1)), times, np.full((size, 1), np.inf)])
        return Inspections(k=k, grid=grid)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "preset": self.preset,
            "k_dist": self.k_dist.to_dict(),
            "gap_dist": self.gap_dist.to_dict(),
            "pi": list(self.pi),
        }


_PRESET_SHAPES = {
    "s1": (1, (1.0,)),
    "s2": (1, (1.0, 0.0)),
    "s3": (1, (0.0, 1.0)),
    "s4": (2, (0.0, 1.0, 0.0)),
    "s5": (1, (0.0, 0.0)),
    "s6": (3, (0.0,)),
}

_PRESET_LABELS = {
    "s1": "uncensored",
    "s2": "right-censored",
    "s3": "left-censored",
    "s4": "doubly censored",
    "s5": "current status",
    "s6": "interval-censored",
}


def preset_scheme(
    name: str,
    gap_dist: GapDistribution | None = None,
    k_dist: CountDistribution | None = None,
) -> InspectionScheme:
    """
    One of the six canonical schemes.

    Single-examination presets default to ``C ~ Exponential(1)``; the
    others to uniform ``(0, 1]`` gaps. ``k_dist`` may only be overridden
    for ``s1`` and ``s6``, whose definition leaves ``K`` free.
    """
    key = name.strip().lower()
    if key not in _PRESET_SHAPES:
        raise SchemeError(f"unknown scheme preset {name!r}; expected one of {', '.join(PRESETS)}")
    k, pi = _PRESET_SHAPES[key]
    if k_dist is not None and key not in ("s1", "s6"):
        raise SchemeError(f"preset {key} fixes K = {k}")
    if gap_dist is None:
        if key in ("s2", "s3", "s5"):
            gap_dist = GapDistribution(GapKind.LIFETIME, lifetime=LifetimeDistribution.exponential(1.0))
        else:
            gap_dist = GapDistribution(GapKind.UNIFORM, tau=1.0)
    return InspectionScheme(
        k_dist=k_dist or CountDistribution(CountKind.FIXED, k=k),
        gap_dist=gap_dist,
        pi=pi,
        preset=key,
        label=f"{key} ({_PRESET_LABELS[key]})",
    )


def scheme_from_dict(payload: dict) -> InspectionScheme:
    """Build a scheme from its JSON form (a preset name plus overrides, or a full description)."""
    from ..serializers import InspectionSchemeSerializer

    serializer = InspectionSchemeSerializer(data=payload)
    if not serializer.is_valid():
        raise SchemeError("invalid scheme description", errors=serializer.errors)
    return serializer.save()


def grid_scheme(tau: float, horizon: float) -> InspectionScheme:
    """Inspections every ``tau`` up to ``horizon``; nothing is observed exactly."""
    if not (math.isfinite(horizon) and horizon > 0):
        raise SchemeError(f"grid horizon must be positive, got {horizon!r}")
    gap = GapDistribution(GapKind.FIXED, tau=tau)
    k = max(int(math.ceil(horizon / tau)), 1)
    return InspectionScheme(
        k_dist=CountDistribution(CountKind.FIXED, k=k),
        gap_dist=gap,
        pi=(0.0,),
        label=f"grid (tau={tau:g}, K={k})",
    )
