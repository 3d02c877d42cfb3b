"""Derived views over a store snapshot: the grader matrix, per-student user
report, gap analysis, the level-completion checklist, and spreadsheet export.

Everything here is a pure function of the store passed in; nothing mutates.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .errors import (
    CompetencyNotInCourse,
    EmptyLevel,
    InvalidReportData,
    StudentNotEnrolled,
    UnsupportedFormat,
)
from .model import CefrLevel, Competency, Rating, Student, format_rating, validate_score
from .store import Store

SCORE_RANGE = "1-5"

DEFAULT_CHECKLIST_THRESHOLD = 4


def rounded_average(ratings: list[Rating]) -> Rating:
    """Mean of the recorded scores, rounded half-up to the nearest integer and
    clamped to [1, 5]; unrecorded entries are excluded, and a list with no
    recorded entry averages to unrecorded.

    Exact integer arithmetic: half-up of s/n is (2s + n) // 2n for s, n > 0.
    """
    scores = [r for r in ratings if r is not None]
    if not scores:
        return None
    total = sum(scores)
    value = (2 * total + len(scores)) // (2 * len(scores))
    return max(1, min(5, value))


def raw_average(ratings: list[Rating]) -> float | None:
    """The unrounded mean to two decimals, for the data layer; None when
    nothing is recorded."""
    scores = [r for r in ratings if r is not None]
    if not scores:
        return None
    return round(sum(scores) / len(scores), 2)


@dataclass(frozen=True)
class GraderRow:
    student: Student
    cells: tuple[Rating, ...]
    course_total: Rating


@dataclass(frozen=True)
class GraderReport:
    """The class-by-competency matrix of current ratings."""

    course_id: str
    course_name: str
    competencies: tuple[Competency, ...]
    rows: tuple[GraderRow, ...]
    footer: tuple[Rating, ...]
    footer_raw: tuple[float | None, ...]


@dataclass(frozen=True)
class UserReportRow:
    title: str
    grade: Rating
    range: str
    feedback: str


@dataclass(frozen=True)
class UserReport:
    """One student's per-competency view of a course, as the student sees it."""

    student: Student
    course_id: str
    course_name: str
    aggregate: Rating
    rows: tuple[UserReportRow, ...]


@dataclass(frozen=True)
class GapAnalysis:
    """Roster partition for one competency: who has a recorded rating and who
    has none, plus the include-in-curriculum recommendation."""

    competency_id: str
    studied: tuple[str, ...]
    unstudied: tuple[str, ...]
    include_in_curriculum: bool


@dataclass(frozen=True)
class LevelChecklist:
    student_id: str
    level: CefrLevel
    threshold: int
    missing: tuple[Competency, ...]

    @property
    def complete(self) -> bool:
        return not self.missing


def grader_report(store: Store, course_id: str) -> GraderReport:
    """Rows are the roster sorted by surname, first name, id; every cell is
    the pair's current rating; totals and footers are rounded averages."""
    course = store.get_course(course_id)
    competencies = tuple(store.get_competency(cid) for cid in course.competency_ids)
    rows = []
    for student in store.roster(course_id):
        cells = tuple(store.current_rating(student.id, cid) for cid in course.competency_ids)
        rows.append(GraderRow(student=student, cells=cells, course_total=rounded_average(list(cells))))
    columns = [[row.cells[i] for row in rows] for i in range(len(competencies))]
    return GraderReport(
        course_id=course.id,
        course_name=course.full_name,
        competencies=competencies,
        rows=tuple(rows),
        footer=tuple(rounded_average(col) for col in columns),
        footer_raw=tuple(raw_average(col) for col in columns),
    )


def user_report(store: Store, student_id: str, course_id: str) -> UserReport:
    course = store.get_course(course_id)
    student = store.get_student(student_id)
    if student_id not in course.roster:
        raise StudentNotEnrolled(
            f"student {student_id!r} is not enrolled in course {course_id!r}",
            student=student_id,
            course=course_id,
        )
    rows = []
    grades: list[Rating] = []
    for cid in course.competency_ids:
        comp = store.get_competency(cid)
        latest = store.current_assessment(student_id, cid)
        grade = latest.score if latest else None
        feedback = (latest.feedback or "") if latest else ""
        grades.append(grade)
        rows.append(UserReportRow(title=comp.title, grade=grade, range=SCORE_RANGE, feedback=feedback))
    return UserReport(
        student=student,
        course_id=course.id,
        course_name=course.full_name,
        aggregate=rounded_average(grades),
        rows=tuple(rows),
    )


def gap_analysis(store: Store, course_id: str, competency_id: str) -> GapAnalysis:
    """Partition the roster by whether the competency has a recorded rating.

    The topic is recommended for the curriculum when nobody has studied it or
    every recorded rating is 3 or below.
    """
    course = store.get_course(course_id)
    if competency_id not in course.competency_ids:
        raise CompetencyNotInCourse(
            f"competency {competency_id!r} is not in course {course_id!r}",
            competency=competency_id,
            course=course_id,
        )
    studied = []
    unstudied = []
    studied_ratings = []
    for student in store.roster(course_id):
        rating = store.current_rating(student.id, competency_id)
        if rating is None:
            unstudied.append(student.id)
        else:
            studied.append(student.id)
            studied_ratings.append(rating)
    include = all(r <= 3 for r in studied_ratings) if studied_ratings else True
    return GapAnalysis(
        competency_id=competency_id,
        studied=tuple(studied),
        unstudied=tuple(unstudied),
        include_in_curriculum=include,
    )


def level_checklist(
    store: Store,
    student_id: str,
    level: CefrLevel,
    threshold: int = DEFAULT_CHECKLIST_THRESHOLD,
) -> LevelChecklist:
    """Which competencies of a level still sit below the satisfactory bar.

    A competency is missing when its current rating is unrecorded or below
    the threshold (default 4: the first score that needs no more work).
    """
    validate_score(threshold)
    store.get_student(student_id)
    level_comps = store.competencies(level=level)
    if not level_comps:
        raise EmptyLevel(f"taxonomy has no competencies at level {level}", level=level.value)
    missing = []
    for comp in level_comps:
        rating = store.current_rating(student_id, comp.id)
        if rating is None or rating < threshold:
            missing.append(comp)
    return LevelChecklist(
        student_id=student_id,
        level=level,
        threshold=threshold,
        missing=tuple(missing),
    )


GRADER_FIXED_HEADER = ["Surname", "First name", "Email address"]
COURSE_TOTAL_HEADER = "Course total"
OVERALL_AVERAGE_LABEL = "Overall average"
USER_REPORT_HEADER = ["Grade item", "Grade", "Range", "Feedback"]


def grader_report_table(report: GraderReport) -> list[list[str]]:
    """The grader matrix as rows of display strings, header and footer
    included; an empty roster renders as the header row alone."""
    header = GRADER_FIXED_HEADER + [c.title for c in report.competencies] + [COURSE_TOTAL_HEADER]
    rows = [header]
    for row in report.rows:
        rows.append(
            [row.student.surname, row.student.first_name, row.student.email]
            + [format_rating(cell) for cell in row.cells]
            + [format_rating(row.course_total)]
        )
    if report.rows:
        rows.append(
            [OVERALL_AVERAGE_LABEL, "", ""] + [format_rating(f) for f in report.footer] + [""]
        )
    return rows


def user_report_table(report: UserReport) -> list[list[str]]:
    rows = [list(USER_REPORT_HEADER)]
    rows.append([report.course_name, format_rating(report.aggregate), "", ""])
    for row in report.rows:
        rows.append([row.title, format_rating(row.grade), row.range, row.feedback])
    return rows


def export_report(report: GraderReport | UserReport, format: str) -> bytes:
    """Render a report as a spreadsheet: csv (RFC 4180, LF) or tsv (no quoting;
    a tab inside a cell is rejected rather than silently mangled)."""
    if isinstance(report, GraderReport):
        table = grader_report_table(report)
    elif isinstance(report, UserReport):
        table = user_report_table(report)
    else:
        raise UnsupportedFormat(f"cannot export object of type {type(report).__name__}")
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(table)
        return buf.getvalue().encode("utf-8")
    if format == "tsv":
        lines = []
        for row in table:
            for cell in row:
                if "\t" in cell or "\n" in cell:
                    raise InvalidReportData(
                        f"cell contains a tab or newline, cannot export as tsv: {cell!r}"
                    )
            lines.append("\t".join(row))
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise UnsupportedFormat(f"unsupported export format: {format!r}", format=format)
