"""Core domain types: CEFR levels, competencies, the 5-point scale, students,
and placement of external test scores onto the level continuum.

All types here are immutable values and safe to share across threads.
"""

from __future__ import annotations

import csv
import functools
import io
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    InvalidCompetency,
    InvalidStudent,
    ScoreOutOfRange,
    UnknownLevel,
    UnknownTest,
)


@functools.total_ordering
class CefrLevel(Enum):
    """The six CEFR proficiency levels, totally ordered A1 < A2 < ... < C2."""

    A1 = "A1"
    A2 = "A2"
    B1 = "B1"
    B2 = "B2"
    C1 = "C1"
    C2 = "C2"

    @property
    def rank(self) -> int:
        return _LEVEL_ORDER.index(self)

    def __lt__(self, other: object) -> bool:
        if not isinstance(other, CefrLevel):
            return NotImplemented
        return self.rank < other.rank

    def __str__(self) -> str:
        return self.value


_LEVEL_ORDER = [
    CefrLevel.A1,
    CefrLevel.A2,
    CefrLevel.B1,
    CefrLevel.B2,
    CefrLevel.C1,
    CefrLevel.C2,
]


def parse_level(text: str) -> CefrLevel:
    """Parse a level symbol, case-insensitively. Raises UnknownLevel otherwise."""
    try:
        return CefrLevel(text.strip().upper())
    except ValueError:
        raise UnknownLevel(f"not a CEFR level: {text!r}", value=text) from None


def format_level(level: CefrLevel) -> str:
    return level.value


def next_level(level: CefrLevel) -> CefrLevel | None:
    """The successor level, or None for C2."""
    if level is CefrLevel.C2:
        return None
    return _LEVEL_ORDER[level.rank + 1]


class CompetencyKind(Enum):
    GRAMMAR = "grammar"
    FUNCTION = "function"

    def __str__(self) -> str:
        return self.value


def parse_kind(text: str) -> CompetencyKind:
    try:
        return CompetencyKind(text.strip().lower())
    except ValueError:
        raise InvalidCompetency(f"not a competency kind: {text!r}", value=text) from None


# 5-point scale: the canonical label for each score.
SCORE_LABELS = {
    5: "mastery",
    4: "acceptable performance",
    3: "working performance",
    2: "limited performance",
    1: "minimal performance",
}

MIN_SCORE = 1
MAX_SCORE = 5

# Rating: a recorded score (int 1..5) or None for unrecorded, rendered "-".
Rating = int | None

UNRECORDED_MARK = "-"


def validate_score(value: int) -> int:
    """Check that a score is an integer in [1, 5]. Raises ScoreOutOfRange."""
    if not isinstance(value, int) or isinstance(value, bool) or not MIN_SCORE <= value <= MAX_SCORE:
        raise ScoreOutOfRange(f"score must be an integer in [1, 5], got {value!r}", value=value)
    return value


def score_label(score: int) -> str:
    """The canonical English label of a score."""
    return SCORE_LABELS[validate_score(score)]


def format_rating(rating: Rating) -> str:
    """Render a rating the way the grids do: the digit, or '-' when unrecorded."""
    if rating is None:
        return UNRECORDED_MARK
    return str(rating)


def parse_rating(text: str) -> Rating:
    text = text.strip()
    if text == UNRECORDED_MARK or text == "":
        return None
    return validate_score(int(text))


@dataclass(frozen=True)
class Competency:
    """One CEFR skill: a grammar point or a function, pinned to a level."""

    id: str
    level: CefrLevel
    kind: CompetencyKind
    title: str
    description: str = ""

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidCompetency("competency id must be nonempty")
        if not self.title.strip():
            raise InvalidCompetency(f"competency {self.id!r} has an empty title", id=self.id)


@dataclass(frozen=True)
class Student:
    id: str
    surname: str
    first_name: str
    email: str

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidStudent("student id must be nonempty")
        if "@" not in self.email:
            raise InvalidStudent(
                f"student {self.id!r} email looks implausible: {self.email!r}",
                id=self.id,
                email=self.email,
            )

    @property
    def full_name(self) -> str:
        return f"{self.first_name} {self.surname}".strip()

    def sort_key(self) -> tuple[str, str, str]:
        return (self.surname, self.first_name, self.id)


@dataclass(frozen=True)
class PlacementEntry:
    test_name: str
    min_score: float
    max_score: float
    level: CefrLevel


@dataclass(frozen=True)
class PlacementTable:
    """Configured mapping from external test score ranges to CEFR levels.

    Ranges are inclusive on both ends; overlapping ranges for the same test
    are rejected at construction so the ambiguity surfaces at config time.
    """

    entries: tuple[PlacementEntry, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        by_test: dict[str, list[PlacementEntry]] = {}
        for entry in self.entries:
            if entry.min_score > entry.max_score:
                raise ValueError(
                    f"placement range for {entry.test_name!r} has min {entry.min_score} > max {entry.max_score}"
                )
            by_test.setdefault(entry.test_name, []).append(entry)
        for test, entries in by_test.items():
            ordered = sorted(entries, key=lambda e: (e.min_score, e.max_score))
            for a, b in zip(ordered, ordered[1:]):
                if b.min_score <= a.max_score:
                    raise ValueError(
                        f"placement ranges overlap for test {test!r}: "
                        f"[{a.min_score}, {a.max_score}] and [{b.min_score}, {b.max_score}]"
                    )

    @classmethod
    def from_rows(cls, rows: list[tuple[str, float, float, CefrLevel]]) -> PlacementTable:
        entries = []
        for test, lo, hi, level in rows:
            if lo > hi:
                raise ValueError(f"placement range for {test!r} has min {lo} > max {hi}")
            entries.append(PlacementEntry(test, lo, hi, level))
        return cls(entries=tuple(entries))

    @classmethod
    def from_csv(cls, data: bytes | str) -> PlacementTable:
        """Load from a UTF-8 CSV with header ``test,min,max,level``."""
        text = data.decode("utf-8-sig") if isinstance(data, bytes) else data
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("placement table file is empty") from None
        if [h.strip().lower() for h in header] != ["test", "min", "max", "level"]:
            raise ValueError(f"placement table header must be test,min,max,level, got {header!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValueError(f"placement table line {lineno}: expected 4 fields, got {len(row)}")
            test, lo, hi, level = (cell.strip() for cell in row)
            try:
                rows.append((test, float(lo), float(hi), parse_level(level)))
            except ValueError:
                raise ValueError(f"placement table line {lineno}: bad score bounds {lo!r}/{hi!r}") from None
        return cls.from_rows(rows)


def place_student(test_name: str, raw_score: float, table: PlacementTable) -> CefrLevel:
    """Map an external test score onto a CEFR level using the configured table.

    Raises UnknownTest when the table has no entries for the test, and
    ScoreOutOfRange when no range of that test contains the score.
    """
    candidates = [e for e in table.entries if e.test_name == test_name]
    if not candidates:
        raise UnknownTest(f"no placement entries for test {test_name!r}", test=test_name)
    for entry in candidates:
        if entry.min_score <= raw_score <= entry.max_score:
            return entry.level
    raise ScoreOutOfRange(
        f"score {raw_score} outside every configured range for test {test_name!r}",
        test=test_name,
        value=raw_score,
    )
