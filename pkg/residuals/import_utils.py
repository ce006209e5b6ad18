from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .censored import Dataset, Observation, Outcome, OutcomeKind
from .exceptions import DataFormatError, InvalidOutcomeError

CSV_IMPORT_ENCODINGS = (
    "utf-8-sig",
    "cp1252",
    "latin-1",
)

INFINITY_LITERALS = {"", "inf", "+inf", "infinity", "+infinity"}

STATUS_VALUES = {kind.value: kind for kind in OutcomeKind}


@dataclass(frozen=True, slots=True)
class ColumnMapping:
    id: str = "id"
    status: str = "status"
    time: str = "time"
    lower: str = "l"
    upper: str = "u"
    covariates: tuple[str, ...] = ()
    stratum: str | None = None


def normalize_cell(raw_value: str | None) -> str:
    return (raw_value or "").strip()


def parse_number(raw_value: str | None, row: int, column: str, *, allow_infinite: bool = False) -> float | None:
    value = normalize_cell(raw_value)
    if allow_infinite and value.lower() in INFINITY_LITERALS:
        return math.inf
    if not value:
        return None
    try:
        number = float(value)
    except ValueError:
        raise DataFormatError(f"not a number: {value!r}", row=row, column=column) from None
    if math.isnan(number) or (math.isinf(number) and not allow_infinite):
        raise DataFormatError(f"non-finite value {value!r}", row=row, column=column)
    return number


def extract_outcome(row: dict, row_number: int, mapping: ColumnMapping) -> Outcome:
    status = normalize_cell(row.get(mapping.status)).lower()
    if status not in STATUS_VALUES:
        raise DataFormatError(f"unknown status {status!r}", row=row_number, column=mapping.status)
    kind = STATUS_VALUES[status]

    if kind is OutcomeKind.EXACT:
        t = parse_number(row.get(mapping.time), row_number, mapping.time)
        if t is None:
            raise DataFormatError("exact row needs a time", row=row_number, column=mapping.time)
        if t <= 0:
            raise DataFormatError(f"negative or zero time {t!r}", row=row_number, column=mapping.time)
        # Endpoint columns on an exact row must be blank or repeat the time.
        for column in (mapping.lower, mapping.upper):
            endpoint = parse_number(row.get(column), row_number, column)
            if endpoint is not None and endpoint != t:
                raise DataFormatError(
                    "status exact with inconsistent endpoint columns", row=row_number, column=column
                )
        return Outcome.exact(t)

    lower = parse_number(row.get(mapping.lower), row_number, mapping.lower)
    upper = parse_number(row.get(mapping.upper), row_number, mapping.upper, allow_infinite=True)
    if lower is None:
        if kind is not OutcomeKind.LEFT:
            raise DataFormatError(f"{status} row needs a lower endpoint", row=row_number, column=mapping.lower)
        lower = 0.0
    if lower < 0:
        raise DataFormatError(f"negative time {lower!r}", row=row_number, column=mapping.lower)
    if upper <= 0:
        raise DataFormatError(f"negative or zero time {upper!r}", row=row_number, column=mapping.upper)
    if lower >= upper:
        column = mapping.upper
        if lower == upper:
            raise DataFormatError("degenerate interval", row=row_number, column=column)
        raise DataFormatError(f"lower endpoint {lower!r} >= upper {upper!r}", row=row_number, column=column)

    if kind is OutcomeKind.INTERVAL and math.isinf(upper):
        raise DataFormatError("status interval with infinite upper endpoint", row=row_number, column=mapping.upper)
    if kind is OutcomeKind.LEFT and lower != 0:
        raise DataFormatError("status left with nonzero lower endpoint", row=row_number, column=mapping.lower)
    if kind is OutcomeKind.RIGHT and not math.isinf(upper):
        raise DataFormatError("status right with finite upper endpoint", row=row_number, column=mapping.upper)

    try:
        return Outcome(kind, l=lower, u=upper)
    except InvalidOutcomeError as exc:
        raise DataFormatError(exc.message, row=row_number, column=mapping.status) from None


def extract_observation(row: dict, row_number: int, mapping: ColumnMapping) -> Observation:
    identifier = normalize_cell(row.get(mapping.id))
    if not identifier:
        raise DataFormatError("missing id", row=row_number, column=mapping.id)

    covariates: list[float] = []
    for column in mapping.covariates:
        if column not in row:
            raise DataFormatError(f"missing covariate column {column!r}", row=row_number, column=column)
        value = parse_number(row.get(column), row_number, column)
        if value is None:
            raise DataFormatError("empty covariate value", row=row_number, column=column)
        covariates.append(value)

    stratum = None
    if mapping.stratum:
        stratum = normalize_cell(row.get(mapping.stratum)) or None
        if stratum is None:
            raise DataFormatError("empty stratum label", row=row_number, column=mapping.stratum)

    return Observation(
        id=identifier,
        outcome=extract_outcome(row, row_number, mapping),
        covariates=tuple(covariates),
        stratum=stratum,
    )


def read_csv_rows(csv_paths: Iterable[str | Path]) -> list[dict]:
    rows: list[dict] = []
    for csv_path in csv_paths:
        path = Path(csv_path).expanduser().resolve()
        last_error: UnicodeDecodeError | None = None
        for encoding in CSV_IMPORT_ENCODINGS:
            try:
                with path.open(mode="r", encoding=encoding, newline="") as file_handle:
                    file_rows = list(csv.DictReader(file_handle))
                rows.extend(file_rows)
                last_error = None
                break
            except UnicodeDecodeError as exc:
                last_error = exc

        if last_error is not None:
            raise last_error
    return rows


def parse_rows(rows: Sequence[dict], mapping: ColumnMapping) -> Dataset:
    observations: list[Observation] = []
    seen: set[str] = set()
    for row_number, row in enumerate(rows, start=1):
        observation = extract_observation(row, row_number, mapping)
        if observation.id in seen:
            raise DataFormatError(f"duplicate id {observation.id!r}", row=row_number, column=mapping.id)
        seen.add(observation.id)
        observations.append(observation)
    if not observations:
        raise DataFormatError("no data rows")
    return Dataset(observations=tuple(observations), covariate_names=tuple(mapping.covariates))


def parse_dataset(path: str | Path, schema: ColumnMapping | None = None) -> Dataset:
    """Read a mixed-censored CSV; row numbers in errors count data rows from 1."""
    mapping = schema or ColumnMapping()
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"missing file: {path}")
    rows = read_csv_rows([path])
    if rows:
        header = set(rows[0].keys())
        for column in (mapping.id, mapping.status):
            if column not in header:
                raise DataFormatError(f"missing column {column!r}", row=0, column=column)
    return parse_rows(rows, mapping)


def format_number(value: float | None) -> str:
    if value is None:
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(float(value))


def dataset_rows(dataset: Dataset, stratum_column: str = "stratum") -> tuple[list[str], list[dict]]:
    header = ["id", "status", "time", "l", "u", *dataset.covariate_names]
    has_strata = any(obs.stratum is not None for obs in dataset)
    if has_strata:
        header.append(stratum_column)
    rows: list[dict] = []
    for obs in dataset:
        outcome = obs.outcome
        row = {"id": obs.id, "status": outcome.kind.value}
        if outcome.is_exact:
            row.update(time=format_number(outcome.t), l="", u="")
        else:
            row.update(time="", l=format_number(outcome.l), u=format_number(outcome.u))
        row.update({name: format_number(value) for name, value in zip(dataset.covariate_names, obs.covariates)})
        if has_strata:
            row[stratum_column] = obs.stratum or ""
        rows.append(row)
    return header, rows


def write_dataset(dataset: Dataset, path: str | Path, extra_columns: dict[str, Sequence[str]] | None = None) -> Path:
    header, rows = dataset_rows(dataset)
    for name, values in (extra_columns or {}).items():
        header.append(name)
        for row, value in zip(rows, values):
            row[name] = value
    path = Path(path)
    with path.open(mode="w", encoding="utf-8", newline="") as file_handle:
        writer = csv.DictWriter(file_handle, fieldnames=header, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return path


def write_csv_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    path = Path(path)
    with path.open(mode="w", encoding="utf-8", newline="") as file_handle:
        writer = csv.writer(file_handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def mapping_for_written_dataset(dataset: Dataset) -> ColumnMapping:
    has_strata = any(obs.stratum is not None for obs in dataset)
    return ColumnMapping(covariates=dataset.covariate_names, stratum="stratum" if has_strata else None)
