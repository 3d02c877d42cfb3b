"""Domain errors with stable machine codes.

Every error carries a ``code`` string that is part of the API contract
(the HTTP service and the CLI both surface it verbatim), a human message,
and an optional detail mapping.
"""

from __future__ import annotations

from typing import Any


class TrackerError(Exception):
    """Base class for all domain errors."""

    code = "error"

    def __init__(self, message: str, **detail: Any):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def __str__(self) -> str:
        return self.message


class UnknownLevel(TrackerError):
    code = "level.unknown"


class EmptyLevel(TrackerError):
    code = "level.empty"


class ScoreOutOfRange(TrackerError):
    code = "score.out_of_range"


class UnknownTest(TrackerError):
    code = "placement.unknown_test"


class UnknownStudent(TrackerError):
    code = "student.unknown"


class InvalidStudent(TrackerError):
    code = "student.invalid"


class StudentNotEnrolled(TrackerError):
    code = "student.not_enrolled"


class UnknownCompetency(TrackerError):
    code = "competency.unknown"


class InvalidCompetency(TrackerError):
    code = "competency.invalid"


class CompetencyNotInCourse(TrackerError):
    code = "course.competency_not_in_course"


class UnknownCourse(TrackerError):
    code = "course.unknown"


class DuplicateShortName(TrackerError):
    code = "course.duplicate_short_name"


class StoreIoError(TrackerError):
    code = "store.io_error"


class CorruptStore(TrackerError):
    code = "store.corrupt"


class MalformedCsv(TrackerError):
    code = "outcomes.malformed_csv"

    def __init__(self, message: str, line: int, **detail: Any):
        super().__init__(message, line=line, **detail)
        self.line = line


class DuplicateSlugConflict(TrackerError):
    code = "outcomes.duplicate_slug"


class CorruptArchive(TrackerError):
    code = "archive.corrupt"


class UnsupportedVersion(TrackerError):
    code = "archive.unsupported_version"


class LevelMismatch(TrackerError):
    code = "archive.level_mismatch"


class IdentityConflict(TrackerError):
    code = "merge.identity_conflict"


class UnsupportedFormat(TrackerError):
    code = "report.unsupported_format"


class InvalidReportData(TrackerError):
    code = "report.invalid_data"


class ConfigError(TrackerError):
    code = "config.invalid"


class PortInUse(TrackerError):
    code = "config.port_in_use"


class AuthRequired(TrackerError):
    code = "auth.required"
