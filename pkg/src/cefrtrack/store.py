"""Append-only assessment store: taxonomy, students, courses, dossiers, and
file-backed persistence.

Concurrency contract: one writer at a time (all mutations serialize on the
store lock, and ``transaction()`` lets a caller hold it across a compound
mutation such as a merge); readers either call the read methods, which take
the lock briefly, or grab ``snapshot()`` for a detached consistent copy that
never blocks the writer. Assessments are never mutated or deleted.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from contextlib import contextmanager
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Callable, Iterator

from .errors import (
    CorruptStore,
    DuplicateShortName,
    InvalidCompetency,
    InvalidStudent,
    LevelMismatch,
    StoreIoError,
    StudentNotEnrolled,
    UnknownCompetency,
    UnknownCourse,
    UnknownStudent,
)
from .model import (
    CefrLevel,
    Competency,
    CompetencyKind,
    Rating,
    Student,
    parse_kind,
    parse_level,
    validate_score,
)

FORMAT_VERSION = 1

SOURCE_LOCAL = "local"
SOURCE_IMPORT = "import"


def utc_now_ms() -> datetime:
    """Current UTC time truncated to millisecond precision."""
    return truncate_ms(datetime.now(timezone.utc))


def truncate_ms(dt: datetime) -> datetime:
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.replace(microsecond=(dt.microsecond // 1000) * 1000)


def format_timestamp(dt: datetime) -> str:
    """RFC 3339 with millisecond precision, e.g. 2013-06-18T00:17:00.000Z."""
    dt = truncate_ms(dt)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


def parse_timestamp(text: str) -> datetime:
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    try:
        return truncate_ms(datetime.fromisoformat(raw))
    except ValueError:
        raise CorruptStore(f"bad timestamp: {text!r}") from None


@dataclass(frozen=True)
class Assessment:
    """One recorded (student, competency, score) event. Append-only."""

    student_id: str
    competency_id: str
    score: int
    feedback: str | None
    assessor: str
    timestamp: datetime
    source: str = SOURCE_LOCAL

    def __post_init__(self) -> None:
        validate_score(self.score)
        if self.source not in (SOURCE_LOCAL, SOURCE_IMPORT):
            raise ValueError(f"bad assessment source: {self.source!r}")

    def identity(self) -> tuple[str, str, int, datetime, str]:
        """The exact-duplicate key used by merge: source and feedback excluded."""
        return (self.student_id, self.competency_id, self.score, self.timestamp, self.assessor)

    def recency_key(self) -> tuple[datetime, int, int]:
        """Latest timestamp wins; ties by higher score, then local over import."""
        return (self.timestamp, self.score, 1 if self.source == SOURCE_LOCAL else 0)


@dataclass(frozen=True)
class Course:
    """A per-level gradebook: an ordered competency list crossed with a roster."""

    id: str
    full_name: str
    short_name: str
    level: CefrLevel
    competency_ids: tuple[str, ...]
    roster: frozenset[str]


@dataclass(frozen=True)
class Dossier:
    """A student's complete assessment history, ordered by (timestamp, score)."""

    student: Student
    history: tuple[Assessment, ...]


class Store:
    """In-memory state with JSON file persistence. See module docstring for
    the concurrency contract."""

    def __init__(self, clock: Callable[[], datetime] | None = None):
        self._lock = threading.RLock()
        self._clock = clock or utc_now_ms
        self._taxonomy: dict[str, Competency] = {}
        self._custom_scope: dict[str, str] = {}  # competency_id -> course_id
        self._students: dict[str, Student] = {}
        self._courses: dict[str, Course] = {}
        self._assessments: list[Assessment] = []
        self._by_pair: dict[tuple[str, str], tuple[Assessment, ...]] = {}

    @contextmanager
    def transaction(self) -> Iterator[Store]:
        """Hold the writer lock across a compound mutation."""
        with self._lock:
            yield self

    def now(self) -> datetime:
        """The store clock, millisecond precision (injectable for tests)."""
        return truncate_ms(self._clock())

    # ------------------------------------------------------------------ reads

    def snapshot(self) -> Store:
        """A detached consistent copy; readers of the copy never block the writer."""
        with self._lock:
            snap = Store(clock=self._clock)
            snap._taxonomy = dict(self._taxonomy)
            snap._custom_scope = dict(self._custom_scope)
            snap._students = dict(self._students)
            snap._courses = dict(self._courses)
            snap._assessments = list(self._assessments)
            snap._by_pair = dict(self._by_pair)
            return snap

    def get_competency(self, competency_id: str) -> Competency:
        with self._lock:
            try:
                return self._taxonomy[competency_id]
            except KeyError:
                raise UnknownCompetency(f"unknown competency: {competency_id!r}", id=competency_id) from None

    def has_competency(self, competency_id: str) -> bool:
        with self._lock:
            return competency_id in self._taxonomy

    def competencies(
        self, level: CefrLevel | None = None, kind: CompetencyKind | None = None
    ) -> tuple[Competency, ...]:
        """Taxonomy order (insertion order), optionally filtered."""
        with self._lock:
            out = []
            for comp in self._taxonomy.values():
                if level is not None and comp.level is not level:
                    continue
                if kind is not None and comp.kind is not kind:
                    continue
                out.append(comp)
            return tuple(out)

    def custom_scope(self, competency_id: str) -> str | None:
        """The course a custom competency is attached to, or None for standard."""
        with self._lock:
            return self._custom_scope.get(competency_id)

    def get_student(self, student_id: str) -> Student:
        with self._lock:
            try:
                return self._students[student_id]
            except KeyError:
                raise UnknownStudent(f"unknown student: {student_id!r}", id=student_id) from None

    def has_student(self, student_id: str) -> bool:
        with self._lock:
            return student_id in self._students

    def students(self) -> tuple[Student, ...]:
        """All students, ordered by surname, first name, id."""
        with self._lock:
            return tuple(sorted(self._students.values(), key=Student.sort_key))

    def find_student_by_email(self, email: str) -> Student | None:
        with self._lock:
            for student in self._students.values():
                if student.email == email:
                    return student
            return None

    def get_course(self, course_id: str) -> Course:
        with self._lock:
            try:
                return self._courses[course_id]
            except KeyError:
                raise UnknownCourse(f"unknown course: {course_id!r}", id=course_id) from None

    def has_course(self, course_id: str) -> bool:
        with self._lock:
            return course_id in self._courses

    def courses(self) -> tuple[Course, ...]:
        with self._lock:
            return tuple(sorted(self._courses.values(), key=lambda c: (c.short_name, c.id)))

    def short_names(self) -> set[str]:
        with self._lock:
            return {c.short_name for c in self._courses.values()}

    def course_ids(self) -> set[str]:
        with self._lock:
            return set(self._courses)

    def roster(self, course_id: str) -> tuple[Student, ...]:
        """Enrolled students ordered by surname, first name, id."""
        with self._lock:
            course = self.get_course(course_id)
            members = [self._students[sid] for sid in course.roster]
            return tuple(sorted(members, key=Student.sort_key))

    def history(self, student_id: str, competency_id: str) -> tuple[Assessment, ...]:
        """All assessments for the pair, ordered by (timestamp, score)."""
        with self._lock:
            items = self._by_pair.get((student_id, competency_id), ())
            return tuple(sorted(items, key=lambda a: (a.timestamp, a.score)))

    def current_rating(self, student_id: str, competency_id: str) -> Rating:
        """The cell value the grids display: latest wins, ties by higher score,
        then local over import; unrecorded when the pair has no history."""
        with self._lock:
            if student_id not in self._students:
                raise UnknownStudent(f"unknown student: {student_id!r}", id=student_id)
            items = self._by_pair.get((student_id, competency_id), ())
            if not items:
                return None
            return max(items, key=Assessment.recency_key).score

    def current_assessment(self, student_id: str, competency_id: str) -> Assessment | None:
        """The assessment whose score is the current rating (None when unrecorded)."""
        with self._lock:
            if student_id not in self._students:
                raise UnknownStudent(f"unknown student: {student_id!r}", id=student_id)
            items = self._by_pair.get((student_id, competency_id), ())
            if not items:
                return None
            return max(items, key=Assessment.recency_key)

    def assessments(self) -> tuple[Assessment, ...]:
        with self._lock:
            return tuple(self._assessments)

    def dossier(self, student_id: str) -> Dossier:
        with self._lock:
            student = self.get_student(student_id)
            history = [a for a in self._assessments if a.student_id == student_id]
            history.sort(key=lambda a: (a.timestamp, a.score))
            return Dossier(student=student, history=tuple(history))

    def is_enrolled_with_competency(self, student_id: str, competency_id: str) -> bool:
        """True when some course both enrolls the student and lists the competency."""
        with self._lock:
            return any(
                student_id in course.roster and competency_id in course.competency_ids
                for course in self._courses.values()
            )

    # -------------------------------------------------------------- mutations

    def add_competency(self, competency: Competency, custom_for: str | None = None) -> Competency:
        with self._lock:
            if competency.id in self._taxonomy:
                existing = self._taxonomy[competency.id]
                if existing != competency:
                    raise InvalidCompetency(
                        f"competency {competency.id!r} already exists with different content",
                        id=competency.id,
                    )
                return existing
            if custom_for is not None and custom_for not in self._courses:
                raise UnknownCourse(f"unknown course: {custom_for!r}", id=custom_for)
            self._taxonomy[competency.id] = competency
            if custom_for is not None:
                self._custom_scope[competency.id] = custom_for
            return competency

    def add_student(self, student: Student) -> Student:
        with self._lock:
            if student.id in self._students:
                existing = self._students[student.id]
                if existing != student:
                    raise InvalidStudent(
                        f"student id {student.id!r} already taken", id=student.id
                    )
                return existing
            self._students[student.id] = student
            return student

    def create_course(
        self,
        full_name: str,
        short_name: str,
        level: CefrLevel,
        competency_ids: list[str] | None = None,
        course_id: str | None = None,
    ) -> Course:
        """Create a per-level gradebook.

        When competency_ids is omitted, the course starts with every standard
        (non-custom) competency of its level, in taxonomy order.
        """
        with self._lock:
            if short_name in self.short_names():
                raise DuplicateShortName(f"course short name taken: {short_name!r}", short_name=short_name)
            if competency_ids is None:
                columns = tuple(
                    c.id
                    for c in self.competencies(level=level)
                    if c.id not in self._custom_scope
                )
            else:
                columns = []
                for cid in competency_ids:
                    comp = self.get_competency(cid)
                    if comp.level is not level:
                        raise LevelMismatch(
                            f"competency {cid!r} is {comp.level}, course is {level}",
                            competency=cid,
                        )
                    if cid not in columns:
                        columns.append(cid)
                columns = tuple(columns)
            cid = course_id or self._fresh_course_id(short_name)
            if cid in self._courses:
                raise DuplicateShortName(f"course id taken: {cid!r}", id=cid)
            course = Course(
                id=cid,
                full_name=full_name,
                short_name=short_name,
                level=level,
                competency_ids=columns,
                roster=frozenset(),
            )
            self._courses[cid] = course
            return course

    def _fresh_course_id(self, short_name: str) -> str:
        base = slugify(short_name) or "course"
        cid = base
        n = 2
        while cid in self._courses:
            cid = f"{base}-{n}"
            n += 1
        return cid

    def attach_competency(self, course_id: str, competency_id: str) -> Course:
        """Append a same-level competency to a course's column list (idempotent)."""
        with self._lock:
            course = self.get_course(course_id)
            comp = self.get_competency(competency_id)
            if comp.level is not course.level:
                raise LevelMismatch(
                    f"competency {competency_id!r} is {comp.level}, course is {course.level}",
                    competency=competency_id,
                )
            if competency_id in course.competency_ids:
                return course
            updated = replace(course, competency_ids=course.competency_ids + (competency_id,))
            self._courses[course_id] = updated
            return updated

    def enroll(self, course_id: str, student_id: str) -> Course:
        """Add to the roster; enrolling an existing member is a no-op."""
        with self._lock:
            course = self.get_course(course_id)
            self.get_student(student_id)
            if student_id in course.roster:
                return course
            updated = replace(course, roster=course.roster | {student_id})
            self._courses[course_id] = updated
            return updated

    def unenroll(self, course_id: str, student_id: str) -> Course:
        """Remove from the roster. Never touches the student's assessments:
        membership is not data ownership."""
        with self._lock:
            course = self.get_course(course_id)
            self.get_student(student_id)
            if student_id not in course.roster:
                return course
            updated = replace(course, roster=course.roster - {student_id})
            self._courses[course_id] = updated
            return updated

    def set_roster(self, course_id: str, student_ids: set[str]) -> Course:
        """Replace the roster wholesale (the Replace import destination)."""
        with self._lock:
            course = self.get_course(course_id)
            for sid in student_ids:
                self.get_student(sid)
            updated = replace(course, roster=frozenset(student_ids))
            self._courses[course_id] = updated
            return updated

    def set_competency_list(self, course_id: str, competency_ids: list[str]) -> Course:
        """Replace the column list wholesale (the Replace import destination)."""
        with self._lock:
            course = self.get_course(course_id)
            for cid in competency_ids:
                comp = self.get_competency(cid)
                if comp.level is not course.level:
                    raise LevelMismatch(
                        f"competency {cid!r} is {comp.level}, course is {course.level}",
                        competency=cid,
                    )
            updated = replace(course, competency_ids=tuple(competency_ids))
            self._courses[course_id] = updated
            return updated

    def rename_course(self, course_id: str, full_name: str, short_name: str) -> Course:
        with self._lock:
            course = self.get_course(course_id)
            for other in self._courses.values():
                if other.id != course_id and other.short_name == short_name:
                    raise DuplicateShortName(
                        f"course short name taken: {short_name!r}", short_name=short_name
                    )
            updated = replace(course, full_name=full_name, short_name=short_name)
            self._courses[course_id] = updated
            return updated

    def record_assessment(
        self,
        student_id: str,
        competency_id: str,
        score: int,
        feedback: str | None = None,
        assessor: str = "educator",
    ) -> Assessment:
        """Append a fresh local assessment with a store-clock timestamp.

        The student must be enrolled in some course that lists the competency.
        """
        with self._lock:
            if student_id not in self._students:
                raise UnknownStudent(f"unknown student: {student_id!r}", id=student_id)
            if competency_id not in self._taxonomy:
                raise UnknownCompetency(f"unknown competency: {competency_id!r}", id=competency_id)
            validate_score(score)
            if not self.is_enrolled_with_competency(student_id, competency_id):
                raise StudentNotEnrolled(
                    f"student {student_id!r} is not enrolled in any course listing {competency_id!r}",
                    student=student_id,
                    competency=competency_id,
                )
            assessment = Assessment(
                student_id=student_id,
                competency_id=competency_id,
                score=score,
                feedback=feedback,
                assessor=assessor,
                timestamp=truncate_ms(self._clock()),
                source=SOURCE_LOCAL,
            )
            self._append(assessment)
            return assessment

    def append_imported(self, assessment: Assessment) -> bool:
        """Dedup-append used by archive import and merge.

        Skips when an identical record (student, competency, score, timestamp,
        assessor) already exists; returns True when appended. The student and
        competency must exist; enrollment is not required (imports may carry
        dossier history beyond the destination course's columns).
        """
        with self._lock:
            if assessment.student_id not in self._students:
                raise UnknownStudent(f"unknown student: {assessment.student_id!r}", id=assessment.student_id)
            if assessment.competency_id not in self._taxonomy:
                raise UnknownCompetency(
                    f"unknown competency: {assessment.competency_id!r}", id=assessment.competency_id
                )
            key = assessment.identity()
            pair = (assessment.student_id, assessment.competency_id)
            if any(existing.identity() == key for existing in self._by_pair.get(pair, ())):
                return False
            self._append(assessment)
            return True

    def _append(self, assessment: Assessment) -> None:
        pair = (assessment.student_id, assessment.competency_id)
        self._assessments.append(assessment)
        self._by_pair[pair] = self._by_pair.get(pair, ()) + (assessment,)

    # ------------------------------------------------------------ persistence

    def to_document(self) -> dict:
        with self._lock:
            return {
                "format_version": FORMAT_VERSION,
                "checksum": "",
                "taxonomy": [
                    {
                        "id": c.id,
                        "level": c.level.value,
                        "kind": c.kind.value,
                        "title": c.title,
                        "description": c.description,
                        "custom_for": self._custom_scope.get(c.id),
                    }
                    for c in self._taxonomy.values()
                ],
                "students": [
                    {
                        "id": s.id,
                        "surname": s.surname,
                        "first_name": s.first_name,
                        "email": s.email,
                    }
                    for s in self._students.values()
                ],
                "courses": [
                    {
                        "id": c.id,
                        "full_name": c.full_name,
                        "short_name": c.short_name,
                        "level": c.level.value,
                        "competency_ids": list(c.competency_ids),
                        "roster": sorted(c.roster),
                    }
                    for c in self._courses.values()
                ],
                "assessments": [
                    {
                        "student_id": a.student_id,
                        "competency_id": a.competency_id,
                        "score": a.score,
                        "feedback": a.feedback,
                        "assessor": a.assessor,
                        "timestamp": format_timestamp(a.timestamp),
                        "source": a.source,
                    }
                    for a in self._assessments
                ],
            }

    @classmethod
    def from_document(cls, doc: dict, clock: Callable[[], datetime] | None = None) -> Store:
        if not isinstance(doc, dict):
            raise CorruptStore("store document is not an object")
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise CorruptStore(f"unsupported store format_version: {version!r}", version=version)
        store = cls(clock=clock)
        try:
            for row in doc["taxonomy"]:
                comp = Competency(
                    id=row["id"],
                    level=parse_level(row["level"]),
                    kind=parse_kind(row["kind"]),
                    title=row["title"],
                    description=row.get("description") or "",
                )
                store._taxonomy[comp.id] = comp
                if row.get("custom_for"):
                    store._custom_scope[comp.id] = row["custom_for"]
            for row in doc["students"]:
                student = Student(
                    id=row["id"],
                    surname=row["surname"],
                    first_name=row["first_name"],
                    email=row["email"],
                )
                store._students[student.id] = student
            for row in doc["courses"]:
                course = Course(
                    id=row["id"],
                    full_name=row["full_name"],
                    short_name=row["short_name"],
                    level=parse_level(row["level"]),
                    competency_ids=tuple(row["competency_ids"]),
                    roster=frozenset(row["roster"]),
                )
                store._courses[course.id] = course
            for row in doc["assessments"]:
                assessment = Assessment(
                    student_id=row["student_id"],
                    competency_id=row["competency_id"],
                    score=row["score"],
                    feedback=row.get("feedback"),
                    assessor=row["assessor"],
                    timestamp=parse_timestamp(row["timestamp"]),
                    source=row.get("source", SOURCE_LOCAL),
                )
                store._append(assessment)
        except CorruptStore:
            raise
        except Exception as exc:
            raise CorruptStore(f"store document malformed: {exc}") from exc
        return store

    def save(self, path: str | os.PathLike) -> None:
        """Atomic write: temp file then rename. The checksum covers the whole
        document in canonical form, so load() can detect corruption."""
        doc = self.to_document()
        doc["checksum"] = document_checksum(doc)
        data = json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
        tmp = f"{os.fspath(path)}.tmp"
        try:
            with open(tmp, "w", encoding="utf-8") as f:
                f.write(data)
            os.replace(tmp, path)
        except OSError as exc:
            raise StoreIoError(f"cannot write store file {path}: {exc}") from exc

    @classmethod
    def load(cls, path: str | os.PathLike, clock: Callable[[], datetime] | None = None) -> Store:
        try:
            with open(path, "rb") as f:
                blob = f.read()
        except OSError as exc:
            raise StoreIoError(f"cannot read store file {path}: {exc}") from exc
        try:
            doc = json.loads(blob.decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptStore(f"store file is not valid UTF-8 JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise CorruptStore("store file is not a JSON object")
        claimed = doc.get("checksum")
        actual = document_checksum(doc)
        if claimed != actual:
            raise CorruptStore(
                "store file checksum mismatch", claimed=claimed, actual=actual
            )
        return cls.from_document(doc, clock=clock)


def document_checksum(doc: dict) -> str:
    """sha256 over the canonical JSON with the checksum field blanked."""
    shadow = dict(doc)
    shadow["checksum"] = ""
    canonical = json.dumps(shadow, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def slugify(text: str) -> str:
    out = []
    for ch in text.lower():
        if ch.isalnum():
            out.append(ch)
        elif out and out[-1] != "-":
            out.append("-")
    return "".join(out).strip("-")


def fresh_student_id(store: Store, first_name: str, surname: str) -> str:
    """A readable unused student id derived from the name."""
    base = slugify(f"{first_name} {surname}") or "student"
    sid = base
    n = 2
    while store.has_student(sid):
        sid = f"{base}-{n}"
        n += 1
    return sid
