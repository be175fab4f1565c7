"""Domain error types.

Every error carries an ``error_code`` so the command layer can report a
stable identifier next to the human-readable message.
"""
from typing import Optional


class RnbError(Exception):
    """Base class for all simulator errors."""

    error_code = "RNB_ERROR"

    def __init__(self, message: str, details: Optional[list] = None):
        super().__init__(message)
        self.message = message
        self.details = details or []


class InvalidInputError(RnbError, ValueError):
    error_code = "INVALID_INPUT"


class DimensionError(RnbError, ValueError):
    error_code = "DIMENSION_MISMATCH"


class NormalizationError(RnbError, ValueError):
    error_code = "NOT_NORMALIZED"


class UnreachableTargetError(RnbError, ValueError):
    error_code = "UNREACHABLE_TARGET"


class MappingError(RnbError, ValueError):
    error_code = "MAPPING_ERROR"


class EncodingError(RnbError, ValueError):
    error_code = "ENCODING_ERROR"


class ScheduleError(RnbError, ValueError):
    error_code = "SCHEDULE_ERROR"


class GroupError(RnbError, ValueError):
    error_code = "GROUP_ERROR"


class BlockError(RnbError, ValueError):
    error_code = "BLOCK_ERROR"


class FitError(RnbError, ValueError):
    error_code = "FIT_ERROR"


class SchemaError(RnbError, ValueError):
    """Malformed description, scenario or report; ``details`` lists offending fields."""

    error_code = "SCHEMA_ERROR"


class VersionError(RnbError, ValueError):
    error_code = "VERSION_MISMATCH"


class SessionError(RnbError, RuntimeError):
    error_code = "SESSION_NOT_PROGRAMMED"


class TrainingError(RnbError, RuntimeError):
    error_code = "TRAINING_DIVERGED"

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch


def schema_error_from_validation(exc, prefix: str = "") -> SchemaError:
    """Build a SchemaError from a pydantic ValidationError, one entry per field."""
    details = []
    for error in exc.errors():
        field = ".".join(str(loc) for loc in error.get("loc", []))
        if prefix:
            field = f"{prefix}.{field}" if field else prefix
        details.append({
            "field": field,
            "message": error.get("msg", "Validation error"),
            "type": error.get("type", "unknown"),
        })
    summary = "; ".join(f"{d['field']}: {d['message']}" for d in details)
    return SchemaError(f"Validation failed: {summary}", details=details)
