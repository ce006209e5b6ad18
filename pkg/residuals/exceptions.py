from __future__ import annotations

from typing import Any


class PsrError(ValueError):
    """Base error for contract violations; serializes to the CLI's error JSON."""

    code = "psr_error"
    exit_code = 2

    def __init__(self, message: str, **detail: Any) -> None:
        super().__init__(message)
        self.message = message
        self.detail = detail

    def as_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"error": self.message, "code": self.code}
        payload.update(self.detail)
        return payload


class DataFormatError(PsrError):
    code = "data_format"

    def __init__(self, message: str, row: int | None = None, column: str | None = None, **detail: Any) -> None:
        super().__init__(message, row=row, column=column, **detail)
        self.row = row
        self.column = column


class InvalidOutcomeError(PsrError):
    code = "invalid_outcome"


class InvalidParameterError(PsrError):
    code = "invalid_parameter"


class DimensionMismatchError(PsrError):
    code = "dimension_mismatch"


class UnknownStratumError(PsrError):
    code = "unknown_stratum"


class ZeroProbabilityIntervalError(PsrError):
    code = "zero_probability_interval"


class RankDeficientError(PsrError):
    code = "rank_deficient"


class DegenerateDataError(PsrError):
    code = "degenerate_data"


class SchemeError(PsrError):
    code = "scheme"


class EmptySampleError(PsrError):
    code = "empty_sample"


class CensoredRecordsError(PsrError):
    code = "censored_records"


class UsageError(PsrError):
    code = "usage"
