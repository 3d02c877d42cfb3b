"""Everything that crosses an installation boundary: outcomes CSV ingestion,
the portable archive container, single-student dossier extraction, and the
three import destinations (new course, merge, replace).

The archive is a zip holding exactly five UTF-8 JSON entries, manifest first:
manifest.json, taxonomy.json, course.json, students.json, assessments.json.
File extension: .ctar.
"""

from __future__ import annotations

import importlib.metadata
import io
import json
import zipfile
from dataclasses import dataclass

from .errors import (
    ConfigError,
    CorruptArchive,
    DuplicateSlugConflict,
    IdentityConflict,
    LevelMismatch,
    MalformedCsv,
    StudentNotEnrolled,
    TrackerError,
    UnsupportedVersion,
)
from .model import Competency, Student, parse_kind, parse_level
from .store import (
    SOURCE_IMPORT,
    Assessment,
    Course,
    Store,
    format_timestamp,
    parse_timestamp,
)

ARCHIVE_VERSION = 1
ARCHIVE_ENTRIES = (
    "manifest.json",
    "taxonomy.json",
    "course.json",
    "students.json",
    "assessments.json",
)
ARCHIVE_EXTENSION = ".ctar"

OUTCOMES_HEADER = ["title", "slug", "kind", "description"]

try:
    _PRODUCER = "cefrtrack/" + importlib.metadata.version("cefrtrack")
except importlib.metadata.PackageNotFoundError:  # running from a checkout
    _PRODUCER = "cefrtrack/dev"


# ------------------------------------------------------------- outcomes CSV


def import_outcomes_csv(
    store: Store,
    data: bytes,
    scope: str = "standard",
    course_id: str | None = None,
) -> list[Competency]:
    """Ingest an outcomes CSV (header ``title,slug,kind,description``; the
    level is the title's leading token, e.g. "B1 ").

    Standard scope adds site-wide competencies; custom scope tags them to one
    course and appends the matching-level ones to that course's columns.
    Returns the competencies actually added; re-importing identical rows is a
    no-op, same slug with different content is a conflict.
    """
    import csv as _csv

    if scope not in ("standard", "custom"):
        raise ConfigError(f"import scope must be standard or custom, got {scope!r}")
    course = None
    if scope == "custom":
        if not course_id:
            raise ConfigError("custom scope requires a course id")
        course = store.get_course(course_id)

    try:
        text = data.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise MalformedCsv(f"outcomes file is not UTF-8: {exc}", line=0) from exc
    reader = _csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedCsv("outcomes file is empty, expected a header row", line=1) from None
    if [h.strip().lower() for h in header] != OUTCOMES_HEADER:
        raise MalformedCsv(
            f"outcomes header must be title,slug,kind,description, got {header!r}", line=1
        )

    rows: list[Competency] = []
    seen: set[str] = set()
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 4:
            raise MalformedCsv(f"expected 4 fields, got {len(row)}", line=line)
        title, slug, kind_text, description = (cell.strip() for cell in row)
        if not title:
            raise MalformedCsv("empty title", line=line)
        if not slug:
            raise MalformedCsv("empty slug", line=line)
        if slug in seen:
            raise MalformedCsv(f"slug {slug!r} appears twice in the file", line=line)
        seen.add(slug)
        try:
            level = parse_level(title.split()[0])
        except TrackerError:
            raise MalformedCsv(
                f"title {title!r} does not start with a CEFR level token", line=line
            ) from None
        try:
            kind = parse_kind(kind_text)
        except TrackerError:
            raise MalformedCsv(f"kind must be grammar or function, got {kind_text!r}", line=line) from None
        rows.append(Competency(id=slug, level=level, kind=kind, title=title, description=description))

    to_add = []
    for comp in rows:
        if store.has_competency(comp.id):
            existing = store.get_competency(comp.id)
            if existing != comp:
                raise DuplicateSlugConflict(
                    f"slug {comp.id!r} already exists with different content", slug=comp.id
                )
        else:
            to_add.append(comp)

    with store.transaction():
        for comp in to_add:
            store.add_competency(comp, custom_for=course.id if course else None)
        if course is not None:
            for comp in rows:
                if comp.level is course.level:
                    store.attach_competency(course.id, comp.id)
    return to_add


# ------------------------------------------------------------------ archives


@dataclass(frozen=True)
class Archive:
    """A validated portable container: one course (or one-student dossier),
    its competencies, roster, and assessment history."""

    format_version: int
    kind: str  # "course" | "dossier"
    created_at: str
    producer: str
    taxonomy: tuple[Competency, ...]
    course: Course
    students: tuple[Student, ...]
    assessments: tuple[Assessment, ...]


@dataclass(frozen=True)
class NewCourse:
    name: str | None = None


@dataclass(frozen=True)
class MergeInto:
    course_id: str


@dataclass(frozen=True)
class Replace:
    course_id: str


ImportDestination = NewCourse | MergeInto | Replace


@dataclass(frozen=True)
class MergeSummary:
    students_added: int = 0
    assessments_added: int = 0
    assessments_skipped: int = 0
    competencies_added: int = 0


def parse_destination(text: str, name: str | None = None) -> ImportDestination:
    """Parse the destination syntax shared by the CLI and the import endpoint:
    ``new``, ``merge:<course>``, or ``replace:<course>``."""
    if text == "new":
        return NewCourse(name=name)
    if text.startswith("merge:") and text[len("merge:"):]:
        return MergeInto(course_id=text[len("merge:"):])
    if text.startswith("replace:") and text[len("replace:"):]:
        return Replace(course_id=text[len("replace:"):])
    raise ConfigError(
        f"destination must be new, merge:<course> or replace:<course>, got {text!r}"
    )


def export_archive(store: Store, course_id: str) -> bytes:
    """The whole course as a portable archive: definition, competencies, full
    roster, and all of those students' assessments on the course's columns."""
    course = store.get_course(course_id)
    return _write_archive(store, course, store.roster(course_id), kind="course")


def export_dossier(store: Store, course_id: str, student_id: str) -> bytes:
    """One student's portable file: the course restricted to that student.

    Replaces the backup/copy/delete-everyone-else/rename/re-backup routine
    with a single step producing the same one-student file.
    """
    course = store.get_course(course_id)
    student = store.get_student(student_id)
    if student_id not in course.roster:
        raise StudentNotEnrolled(
            f"student {student_id!r} is not enrolled in course {course_id!r}",
            student=student_id,
            course=course_id,
        )
    return _write_archive(store, course, (student,), kind="dossier")


def _write_archive(store: Store, course: Course, students: tuple[Student, ...], kind: str) -> bytes:
    selected = {s.id for s in students}
    columns = set(course.competency_ids)
    assessments = [
        a for a in store.assessments() if a.student_id in selected and a.competency_id in columns
    ]
    assessments.sort(
        key=lambda a: (a.timestamp, a.student_id, a.competency_id, a.score, a.assessor)
    )
    entries = {
        "manifest.json": {
            "format_version": ARCHIVE_VERSION,
            "kind": kind,
            "created_at": format_timestamp(store.now()),
            "producer": _PRODUCER,
        },
        "taxonomy.json": [
            {
                "id": c.id,
                "level": c.level.value,
                "kind": c.kind.value,
                "title": c.title,
                "description": c.description,
            }
            for c in (store.get_competency(cid) for cid in course.competency_ids)
        ],
        "course.json": {
            "id": course.id,
            "full_name": course.full_name,
            "short_name": course.short_name,
            "level": course.level.value,
            "competency_ids": list(course.competency_ids),
        },
        "students.json": [
            {"id": s.id, "surname": s.surname, "first_name": s.first_name, "email": s.email}
            for s in students
        ],
        "assessments.json": [
            {
                "student_id": a.student_id,
                "competency_id": a.competency_id,
                "score": a.score,
                "feedback": a.feedback,
                "assessor": a.assessor,
                "timestamp": format_timestamp(a.timestamp),
                "source": a.source,
            }
            for a in assessments
        ],
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in ARCHIVE_ENTRIES:  # manifest.json written first
            info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            zf.writestr(info, json.dumps(entries[name], indent=2, ensure_ascii=False))
    return buf.getvalue()


def read_archive(data: bytes) -> Archive:
    """Parse and fully validate an archive; raises CorruptArchive on any
    structural fault and UnsupportedVersion on a format_version we don't read."""
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except zipfile.BadZipFile as exc:
        raise CorruptArchive(f"not a zip archive: {exc}") from exc
    with zf:
        names = zf.namelist()
        if set(names) != set(ARCHIVE_ENTRIES) or len(names) != len(ARCHIVE_ENTRIES):
            raise CorruptArchive(f"archive entries must be exactly {list(ARCHIVE_ENTRIES)}, got {names}")
        if names[0] != "manifest.json":
            raise CorruptArchive("manifest.json must be the first archive entry")
        parsed = {}
        for name in ARCHIVE_ENTRIES:
            try:
                parsed[name] = json.loads(zf.read(name).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                raise CorruptArchive(f"{name} is not valid UTF-8 JSON: {exc}") from exc

    manifest = parsed["manifest.json"]
    if not isinstance(manifest, dict):
        raise CorruptArchive("manifest.json must be an object")
    version = manifest.get("format_version")
    if not isinstance(version, int) or isinstance(version, bool):
        raise CorruptArchive(f"manifest format_version must be an integer, got {version!r}")
    if version != ARCHIVE_VERSION:
        raise UnsupportedVersion(f"archive format_version {version} is not supported", version=version)
    kind = manifest.get("kind")
    if kind not in ("course", "dossier"):
        raise CorruptArchive(f"manifest kind must be course or dossier, got {kind!r}")

    try:
        taxonomy = tuple(
            Competency(
                id=row["id"],
                level=parse_level(row["level"]),
                kind=parse_kind(row["kind"]),
                title=row["title"],
                description=row.get("description") or "",
            )
            for row in parsed["taxonomy.json"]
        )
        course_row = parsed["course.json"]
        students = tuple(
            Student(
                id=row["id"],
                surname=row["surname"],
                first_name=row["first_name"],
                email=row["email"],
            )
            for row in parsed["students.json"]
        )
        assessments = tuple(
            Assessment(
                student_id=row["student_id"],
                competency_id=row["competency_id"],
                score=row["score"],
                feedback=row.get("feedback"),
                assessor=row["assessor"],
                timestamp=parse_timestamp(row["timestamp"]),
                source=row.get("source", SOURCE_IMPORT),
            )
            for row in parsed["assessments.json"]
        )
        course = Course(
            id=course_row["id"],
            full_name=course_row["full_name"],
            short_name=course_row["short_name"],
            level=parse_level(course_row["level"]),
            competency_ids=tuple(course_row["competency_ids"]),
            roster=frozenset(s.id for s in students),
        )
    except (TrackerError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, UnsupportedVersion):
            raise
        raise CorruptArchive(f"archive content malformed: {exc}") from exc

    comp_ids = {c.id for c in taxonomy}
    if len(comp_ids) != len(taxonomy):
        raise CorruptArchive("duplicate competency ids in taxonomy.json")
    student_ids = {s.id for s in students}
    if len(student_ids) != len(students):
        raise CorruptArchive("duplicate student ids in students.json")
    for cid in course.competency_ids:
        if cid not in comp_ids:
            raise CorruptArchive(f"course lists competency {cid!r} missing from taxonomy.json")
    for a in assessments:
        if a.student_id not in student_ids:
            raise CorruptArchive(f"assessment references student {a.student_id!r} not in students.json")
        if a.competency_id not in comp_ids:
            raise CorruptArchive(f"assessment references competency {a.competency_id!r} not in taxonomy.json")
    if kind == "dossier" and len(students) != 1:
        raise CorruptArchive(f"a dossier archive must hold exactly one student, got {len(students)}")

    return Archive(
        format_version=version,
        kind=kind,
        created_at=str(manifest.get("created_at", "")),
        producer=str(manifest.get("producer", "")),
        taxonomy=taxonomy,
        course=course,
        students=students,
        assessments=assessments,
    )


# ----------------------------------------------------------------- importing


def import_archive(store: Store, data: bytes, dest: ImportDestination) -> str:
    """Restore an archive into the store; returns the destination course id."""
    archive = read_archive(data)
    if isinstance(dest, NewCourse):
        return _restore_as_new(store, archive, dest.name)
    if isinstance(dest, MergeInto):
        merge_into(store, dest.course_id, archive)
        return dest.course_id
    if isinstance(dest, Replace):
        return _replace_course(store, archive, dest.course_id)
    raise ConfigError(f"unknown import destination: {dest!r}")


def merge_into(store: Store, course_id: str, archive: Archive) -> MergeSummary:
    """Union the archive into an existing course of the same level.

    Unknown students are created and enrolled; known students (matched by id,
    then by exact email) are enrolled if absent. Assessments append with
    source=import unless an identical record already exists. Unknown
    competencies join the taxonomy (tagged to this course) but the course's
    column list is left alone, so reports never depend on merge order.
    """
    with store.transaction():
        course = store.get_course(course_id)
        if archive.course.level is not course.level:
            raise LevelMismatch(
                f"archive is {archive.course.level}, course {course_id!r} is {course.level}",
                archive_level=archive.course.level.value,
                course_level=course.level.value,
            )
        id_map = _resolve_students(store, archive.students)

        students_added = 0
        for student in archive.students:
            mapped = id_map[student.id]
            if mapped is None:
                store.add_student(student)
                store.enroll(course_id, student.id)
                id_map[student.id] = student.id
                students_added += 1
            else:
                store.enroll(course_id, mapped)

        competencies_added = _add_missing_competencies(store, archive, course_id)
        added, skipped = _append_assessments(store, archive, id_map)
        return MergeSummary(
            students_added=students_added,
            assessments_added=added,
            assessments_skipped=skipped,
            competencies_added=competencies_added,
        )


def _restore_as_new(store: Store, archive: Archive, name: str | None) -> str:
    with store.transaction():
        id_map = _resolve_students(store, archive.students)
        _check_column_levels(store, archive)

        base_short = archive.course.short_name
        base_full = name or archive.course.full_name
        n = 1
        while f"{base_short} copy {n}" in store.short_names():
            n += 1
        course = store.create_course(
            full_name=f"{base_full} copy {n}",
            short_name=f"{base_short} copy {n}",
            level=archive.course.level,
            competency_ids=[],
        )
        _add_missing_competencies(store, archive, course.id)
        store.set_competency_list(course.id, list(archive.course.competency_ids))
        for student in archive.students:
            mapped = id_map[student.id]
            if mapped is None:
                store.add_student(student)
                id_map[student.id] = student.id
                mapped = student.id
            store.enroll(course.id, mapped)
        _append_assessments(store, archive, id_map)
        return course.id


def _replace_course(store: Store, archive: Archive, course_id: str) -> str:
    """Delete-the-contents-then-restore: roster and columns become the
    archive's; prior assessment history stays in the global store."""
    with store.transaction():
        course = store.get_course(course_id)
        if archive.course.level is not course.level:
            raise LevelMismatch(
                f"archive is {archive.course.level}, course {course_id!r} is {course.level}",
                archive_level=archive.course.level.value,
                course_level=course.level.value,
            )
        id_map = _resolve_students(store, archive.students)
        _check_column_levels(store, archive)

        _add_missing_competencies(store, archive, course_id)
        store.set_competency_list(course_id, list(archive.course.competency_ids))
        roster = set()
        for student in archive.students:
            mapped = id_map[student.id]
            if mapped is None:
                store.add_student(student)
                id_map[student.id] = student.id
                mapped = student.id
            roster.add(mapped)
        store.set_roster(course_id, roster)
        _append_assessments(store, archive, id_map)
        return course_id


def _resolve_students(store: Store, students: tuple[Student, ...]) -> dict[str, str | None]:
    """Map archive student ids to local ids: id match first, exact-email
    fallback; None means create. Same email under a different name is a
    conflict we refuse to auto-resolve. Raises before any mutation."""
    id_map: dict[str, str | None] = {}
    for student in students:
        if store.has_student(student.id):
            id_map[student.id] = student.id
            continue
        existing = store.find_student_by_email(student.email)
        if existing is not None:
            if (existing.surname, existing.first_name) != (student.surname, student.first_name):
                raise IdentityConflict(
                    f"email {student.email!r} belongs to {existing.full_name!r} here "
                    f"but to {student.full_name!r} in the archive",
                    email=student.email,
                    local_student=existing.id,
                    archive_student=student.id,
                )
            id_map[student.id] = existing.id
        else:
            id_map[student.id] = None
    return id_map


def _check_column_levels(store: Store, archive: Archive) -> None:
    """An existing competency with an archived slug must sit at the archive
    course's level, or restoring the column list would break the course."""
    for comp in archive.taxonomy:
        if store.has_competency(comp.id):
            existing = store.get_competency(comp.id)
            if comp.id in archive.course.competency_ids and existing.level is not archive.course.level:
                raise LevelMismatch(
                    f"competency {comp.id!r} is {existing.level} here but the archive course is "
                    f"{archive.course.level}",
                    competency=comp.id,
                )


def _add_missing_competencies(store: Store, archive: Archive, course_id: str) -> int:
    added = 0
    for comp in archive.taxonomy:
        if not store.has_competency(comp.id):
            store.add_competency(comp, custom_for=course_id)
            added += 1
    return added


def _append_assessments(store: Store, archive: Archive, id_map: dict[str, str | None]) -> tuple[int, int]:
    added = 0
    skipped = 0
    for a in archive.assessments:
        mapped = id_map[a.student_id]
        assert mapped is not None  # students resolved or created above
        record = Assessment(
            student_id=mapped,
            competency_id=a.competency_id,
            score=a.score,
            feedback=a.feedback,
            assessor=a.assessor,
            timestamp=a.timestamp,
            source=SOURCE_IMPORT,
        )
        if store.append_imported(record):
            added += 1
        else:
            skipped += 1
    return added, skipped
