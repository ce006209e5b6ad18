"""Covariate transforms and basis expansions applied before fitting."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..censored import Dataset
from ..exceptions import InvalidParameterError, UsageError

TRANSFORMS = ("identity", "sqrt", "log")
BASES = ("linear", "pwl", "ns")


@dataclass(frozen=True, slots=True)
class BasisSpec:
    """
    How one raw covariate column enters the design matrix.

    ``knots`` holds the break points for ``pwl`` and the spline knots for
    ``ns``; ``n_knots`` asks for quantile-placed spline knots and is
    resolved to explicit ``knots`` by :func:`resolve_basis`.
    """

    column: str
    transform: str = "identity"
    basis: str = "linear"
    knots: tuple[float, ...] = ()
    n_knots: int | None = None

    def label(self) -> str:
        return self.column if self.transform == "identity" else f"{self.transform}_{self.column}"

    def column_names(self) -> list[str]:
        label = self.label()
        if self.basis == "linear":
            return [label]
        if self.basis == "pwl":
            return [label] + [f"{label}_gt{knot:g}" for knot in self.knots]
        return [f"{label}_ns{index + 1}" for index in range(len(self.knots) - 1)]


def parse_basis_spec(raw: str) -> BasisSpec:
    """Parse ``column[:transform][:pwl=k1,k2|:ns=K]``."""
    parts = [part.strip() for part in raw.split(":") if part.strip()]
    if not parts:
        raise UsageError(f"empty basis specification {raw!r}")
    spec = BasisSpec(column=parts[0])
    for token in parts[1:]:
        if token in TRANSFORMS:
            spec = replace(spec, transform=token)
        elif token.startswith("pwl="):
            try:
                knots = tuple(sorted(float(value) for value in token[4:].split(",") if value))
            except ValueError:
                raise UsageError(f"bad break points in {raw!r}") from None
            if not knots:
                raise UsageError(f"pwl needs at least one break point in {raw!r}")
            spec = replace(spec, basis="pwl", knots=knots)
        elif token.startswith("ns="):
            try:
                count = int(token[3:])
            except ValueError:
                raise UsageError(f"bad knot count in {raw!r}") from None
            if count < 3:
                raise UsageError("a natural spline needs at least 3 knots")
            spec = replace(spec, basis="ns", n_knots=count)
        else:
            raise UsageError(f"unknown basis token {token!r} in {raw!r}")
    return spec


def apply_transform(values: np.ndarray, transform: str) -> np.ndarray:
    if transform == "identity":
        return values
    if transform == "sqrt":
        if np.any(values < 0):
            raise InvalidParameterError("sqrt transform needs nonnegative values")
        return np.sqrt(values)
    if transform == "log":
        if np.any(values <= 0):
            raise InvalidParameterError("log transform needs positive values")
        return np.log(values)
    raise InvalidParameterError(f"unknown transform {transform!r}")


def piecewise_linear_basis(x: np.ndarray, knots: Sequence[float]) -> np.ndarray:
    columns = [x] + [np.maximum(x - knot, 0.0) for knot in knots]
    return np.column_stack(columns)


def natural_spline_basis(x: np.ndarray, knots: Sequence[float]) -> np.ndarray:
    """Truncated-power natural cubic spline basis: ``len(knots) - 1`` columns, linear beyond the boundary knots."""
    knots = np.asarray(knots, dtype=float)
    last = knots[-1]

    def d(k: int) -> np.ndarray:
        return (np.maximum(x - knots[k], 0.0) ** 3 - np.maximum(x - last, 0.0) ** 3) / (last - knots[k])

    columns = [x]
    d_penultimate = d(len(knots) - 2)
    for k in range(len(knots) - 2):
        columns.append(d(k) - d_penultimate)
    return np.column_stack(columns)


def resolve_basis(spec: BasisSpec, raw_values: np.ndarray) -> BasisSpec:
    if spec.basis != "ns" or spec.knots:
        return spec
    values = apply_transform(raw_values, spec.transform)
    levels = np.linspace(0.1, 0.9, spec.n_knots)
    knots = tuple(float(k) for k in np.quantile(values, levels))
    if len(set(knots)) != len(knots):
        raise InvalidParameterError(f"covariate {spec.column!r} has too few distinct values for {spec.n_knots} knots")
    return replace(spec, knots=knots, n_knots=None)


def expand_column(spec: BasisSpec, raw_values: np.ndarray) -> tuple[list[str], np.ndarray]:
    values = apply_transform(np.asarray(raw_values, dtype=float), spec.transform)
    names = spec.column_names()
    if spec.basis == "linear":
        return names, values.reshape(-1, 1)
    if spec.basis == "pwl":
        return names, piecewise_linear_basis(values, spec.knots)
    return names, natural_spline_basis(values, spec.knots)


def expand_covariates(dataset: Dataset, specs: Sequence[BasisSpec]) -> tuple[Dataset, list[BasisSpec]]:
    """Replace each named column by its expansion; returns specs with resolved knots."""
    by_column = {spec.column: spec for spec in specs}
    unknown = set(by_column) - set(dataset.covariate_names)
    if unknown:
        raise UsageError(f"basis given for unknown covariate(s): {', '.join(sorted(unknown))}")
    if not specs:
        return dataset, []

    matrix = dataset.design_matrix()
    names: list[str] = []
    blocks: list[np.ndarray] = []
    resolved: list[BasisSpec] = []
    for index, name in enumerate(dataset.covariate_names):
        column = matrix[:, index]
        if name not in by_column:
            names.append(name)
            blocks.append(column.reshape(-1, 1))
            continue
        spec = resolve_basis(by_column[name], column)
        resolved.append(spec)
        expanded_names, block = expand_column(spec, column)
        names.extend(expanded_names)
        blocks.append(block)
    return dataset.with_covariates(names, np.hstack(blocks)), resolved
