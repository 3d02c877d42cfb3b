"""HTTP facade over the store, reporting, and portability operations.

Every endpoint is a thin adapter over exactly one module operation; errors
surface as JSON bodies {code, message, detail} with the domain error's stable
code. Mutations are serialized by the store's writer lock and persisted to
disk on success; reads run against detached snapshots.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, Form, Query, Request, Response, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import portability, reports
from .errors import AuthRequired, PortInUse, TrackerError, UnsupportedFormat
from .model import (
    CefrLevel,
    PlacementTable,
    Student,
    parse_level,
    place_student,
)
from .reports import GraderReport, UserReport
from .store import Course, Store, fresh_student_id, slugify

API_PREFIX = "/api/v1"

STORE_FILENAME = "store.json"

# HTTP status per error code prefix: 400 validation, 404 unknown things,
# 409 conflicts, 422 archive-level faults.
ERROR_STATUS = {
    "level.unknown": 400,
    "level.empty": 404,
    "score.out_of_range": 400,
    "placement.unknown_test": 404,
    "student.unknown": 404,
    "student.invalid": 400,
    "student.not_enrolled": 404,
    "competency.unknown": 404,
    "competency.invalid": 400,
    "course.competency_not_in_course": 404,
    "course.unknown": 404,
    "course.duplicate_short_name": 409,
    "store.io_error": 500,
    "store.corrupt": 500,
    "outcomes.malformed_csv": 400,
    "outcomes.duplicate_slug": 409,
    "archive.corrupt": 422,
    "archive.unsupported_version": 422,
    "archive.level_mismatch": 422,
    "merge.identity_conflict": 409,
    "report.unsupported_format": 400,
    "report.invalid_data": 400,
    "config.invalid": 400,
    "auth.required": 401,
}


@dataclass
class ServiceConfig:
    data_dir: str = "."
    host: str = "127.0.0.1"
    port: int = 8571
    placement_table: str | None = None
    checklist_threshold: int = 4
    token: str | None = None
    frontend_dir: str | None = None

    @classmethod
    def from_env(cls, **overrides) -> ServiceConfig:
        values = dict(
            data_dir=os.environ.get("CTRACK_DATA_DIR", "."),
            host=os.environ.get("CTRACK_HOST", "127.0.0.1"),
            port=int(os.environ.get("CTRACK_PORT", "8571")),
            placement_table=os.environ.get("CTRACK_PLACEMENT_TABLE"),
            checklist_threshold=int(os.environ.get("CTRACK_CHECKLIST_THRESHOLD", "4")),
            token=os.environ.get("CTRACK_TOKEN"),
            frontend_dir=os.environ.get("CTRACK_FRONTEND"),
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def store_path(self) -> Path:
        return Path(self.data_dir) / STORE_FILENAME


class StudentIn(BaseModel):
    id: str | None = None
    surname: str
    first_name: str
    email: str


class CourseIn(BaseModel):
    id: str | None = None
    full_name: str
    short_name: str
    level: str
    competency_ids: list[str] | None = None


class EnrollIn(BaseModel):
    student: str


class RenameIn(BaseModel):
    full_name: str | None = None
    short_name: str | None = None


class GradeIn(BaseModel):
    student: str
    competency: str
    score: int
    feedback: str | None = None
    assessor: str = "educator"


class PlacementIn(BaseModel):
    test: str
    score: float


def student_json(s: Student) -> dict:
    return {"id": s.id, "surname": s.surname, "first_name": s.first_name, "email": s.email}


def course_json(c: Course) -> dict:
    return {
        "id": c.id,
        "full_name": c.full_name,
        "short_name": c.short_name,
        "level": c.level.value,
        "competency_ids": list(c.competency_ids),
        "roster": sorted(c.roster),
    }


def grader_json(report: GraderReport) -> dict:
    return {
        "course_id": report.course_id,
        "course_name": report.course_name,
        "columns": [{"id": c.id, "title": c.title} for c in report.competencies],
        "rows": [
            {
                "student": student_json(row.student),
                "cells": list(row.cells),
                "course_total": row.course_total,
            }
            for row in report.rows
        ],
        "footer": list(report.footer),
        "footer_raw": list(report.footer_raw),
    }


def user_json(report: UserReport) -> dict:
    return {
        "student": student_json(report.student),
        "course_id": report.course_id,
        "course_name": report.course_name,
        "aggregate": report.aggregate,
        "rows": [
            {"title": r.title, "grade": r.grade, "range": r.range, "feedback": r.feedback}
            for r in report.rows
        ],
    }


def create_app(config: ServiceConfig | None = None, store: Store | None = None) -> FastAPI:
    """Build the service. Loads the store from disk (refusing to serve a
    corrupt file) or starts empty; an injected store skips disk entirely."""
    config = config or ServiceConfig.from_env()

    persistent = store is None
    if store is None:
        if config.store_path.exists():
            store = Store.load(config.store_path)  # CorruptStore propagates
        else:
            store = Store()

    placement = PlacementTable()
    if config.placement_table:
        placement = PlacementTable.from_csv(Path(config.placement_table).read_bytes())

    def persist() -> None:
        if persistent:
            Path(config.data_dir).mkdir(parents=True, exist_ok=True)
            store.save(config.store_path)

    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        yield
        persist()

    app = FastAPI(title="cefrtrack", version="1", lifespan=lifespan)
    app.state.store = store
    app.state.config = config
    app.state.placement = placement

    @app.exception_handler(TrackerError)
    async def tracker_error_handler(request: Request, exc: TrackerError):
        status = ERROR_STATUS.get(exc.code, 400)
        detail = {k: (v.value if isinstance(v, CefrLevel) else v) for k, v in exc.detail.items()}
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": exc.message, "detail": detail},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"code": "request.invalid", "message": "invalid request body", "detail": {}},
        )

    async def require_token(request: Request) -> None:
        if config.token is None:
            return
        header = request.headers.get("authorization", "")
        if header != f"Bearer {config.token}":
            raise AuthRequired("missing or bad bearer token")

    guarded = Depends(require_token)

    @app.get(f"{API_PREFIX}/health")
    def health():
        snap = store.snapshot()
        return {"status": "ok", "courses": len(snap.courses())}

    # ----------------------------------------------------------- taxonomy

    @app.post(f"{API_PREFIX}/outcomes/import", dependencies=[guarded])
    async def outcomes_import(
        request: Request,
        scope: str = Query("standard"),
        course: str | None = Query(None),
    ):
        body = await request.body()
        added = portability.import_outcomes_csv(store, body, scope=scope, course_id=course)
        persist()
        return {
            "added": len(added),
            "competencies": [
                {"id": c.id, "level": c.level.value, "kind": c.kind.value, "title": c.title}
                for c in added
            ],
        }

    @app.get(f"{API_PREFIX}/competencies", dependencies=[guarded])
    def competencies(level: str | None = Query(None)):
        snap = store.snapshot()
        wanted = parse_level(level) if level else None
        return [
            {
                "id": c.id,
                "level": c.level.value,
                "kind": c.kind.value,
                "title": c.title,
                "description": c.description,
            }
            for c in snap.competencies(level=wanted)
        ]

    # ------------------------------------------------------------- people

    @app.post(f"{API_PREFIX}/students", status_code=201, dependencies=[guarded])
    def add_student(body: StudentIn):
        student = Student(
            id=body.id or fresh_student_id(store, body.first_name, body.surname),
            surname=body.surname,
            first_name=body.first_name,
            email=body.email,
        )
        store.add_student(student)
        persist()
        return student_json(student)

    @app.get(f"{API_PREFIX}/students", dependencies=[guarded])
    def list_students():
        return [student_json(s) for s in store.snapshot().students()]

    # ------------------------------------------------------------- courses

    @app.post(f"{API_PREFIX}/courses", status_code=201, dependencies=[guarded])
    def create_course(body: CourseIn):
        course = store.create_course(
            full_name=body.full_name,
            short_name=body.short_name,
            level=parse_level(body.level),
            competency_ids=body.competency_ids,
            course_id=body.id,
        )
        persist()
        return course_json(course)

    @app.get(f"{API_PREFIX}/courses", dependencies=[guarded])
    def list_courses():
        return [course_json(c) for c in store.snapshot().courses()]

    @app.post(f"{API_PREFIX}/courses/{{course_id}}/enroll", dependencies=[guarded])
    def enroll(course_id: str, body: EnrollIn):
        course = store.enroll(course_id, body.student)
        persist()
        return course_json(course)

    @app.delete(f"{API_PREFIX}/courses/{{course_id}}/enroll/{{student_id}}", dependencies=[guarded])
    def unenroll(course_id: str, student_id: str):
        course = store.unenroll(course_id, student_id)
        persist()
        return course_json(course)

    @app.patch(f"{API_PREFIX}/courses/{{course_id}}", dependencies=[guarded])
    def rename(course_id: str, body: RenameIn):
        current = store.get_course(course_id)
        course = store.rename_course(
            course_id,
            body.full_name if body.full_name is not None else current.full_name,
            body.short_name if body.short_name is not None else current.short_name,
        )
        persist()
        return course_json(course)

    # ------------------------------------------------------------- grading

    @app.put(f"{API_PREFIX}/grades", dependencies=[guarded])
    def record_grade(body: GradeIn):
        assessment = store.record_assessment(
            body.student, body.competency, body.score, feedback=body.feedback, assessor=body.assessor
        )
        persist()
        return {
            "student": assessment.student_id,
            "competency": assessment.competency_id,
            "score": assessment.score,
            "timestamp": assessment.timestamp.isoformat(),
            "current_rating": store.current_rating(body.student, body.competency),
        }

    # ------------------------------------------------------------- reports

    def _report_response(report: GraderReport | UserReport, format: str) -> Response:
        if format == "json":
            payload = grader_json(report) if isinstance(report, GraderReport) else user_json(report)
            return JSONResponse(payload)
        if format in ("csv", "tsv"):
            media = "text/csv" if format == "csv" else "text/tab-separated-values"
            return Response(content=reports.export_report(report, format), media_type=media)
        raise UnsupportedFormat(f"unsupported format: {format!r}", format=format)

    @app.get(f"{API_PREFIX}/courses/{{course_id}}/grader-report", dependencies=[guarded])
    def get_grader_report(course_id: str, format: str = Query("json")):
        return _report_response(reports.grader_report(store.snapshot(), course_id), format)

    @app.get(
        f"{API_PREFIX}/courses/{{course_id}}/students/{{student_id}}/user-report",
        dependencies=[guarded],
    )
    def get_user_report(course_id: str, student_id: str, format: str = Query("json")):
        return _report_response(reports.user_report(store.snapshot(), student_id, course_id), format)

    @app.get(f"{API_PREFIX}/courses/{{course_id}}/gaps/{{competency_id}}", dependencies=[guarded])
    def get_gaps(course_id: str, competency_id: str):
        gaps = reports.gap_analysis(store.snapshot(), course_id, competency_id)
        return {
            "competency_id": gaps.competency_id,
            "studied": list(gaps.studied),
            "unstudied": list(gaps.unstudied),
            "include_in_curriculum": gaps.include_in_curriculum,
        }

    @app.get(f"{API_PREFIX}/students/{{student_id}}/checklist/{{level}}", dependencies=[guarded])
    def get_checklist(student_id: str, level: str, threshold: int | None = Query(None)):
        checklist = reports.level_checklist(
            store.snapshot(),
            student_id,
            parse_level(level),
            threshold if threshold is not None else config.checklist_threshold,
        )
        return {
            "student_id": checklist.student_id,
            "level": checklist.level.value,
            "threshold": checklist.threshold,
            "missing": [{"id": c.id, "title": c.title} for c in checklist.missing],
            "complete": checklist.complete,
        }

    # ----------------------------------------------------------- placement

    @app.post(f"{API_PREFIX}/placement", dependencies=[guarded])
    def placement_lookup(body: PlacementIn):
        level = place_student(body.test, body.score, placement)
        return {"test": body.test, "score": body.score, "level": level.value}

    # --------------------------------------------------------- portability

    def _archive_response(data: bytes, filename: str) -> Response:
        return Response(
            content=data,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{filename}"'},
        )

    @app.get(f"{API_PREFIX}/courses/{{course_id}}/export", dependencies=[guarded])
    def export_course(course_id: str):
        snap = store.snapshot()
        data = portability.export_archive(snap, course_id)
        name = slugify(snap.get_course(course_id).short_name) or "course"
        return _archive_response(data, f"{name}{portability.ARCHIVE_EXTENSION}")

    @app.get(f"{API_PREFIX}/courses/{{course_id}}/export/{{student_id}}", dependencies=[guarded])
    def export_student_dossier(course_id: str, student_id: str):
        snap = store.snapshot()
        data = portability.export_dossier(snap, course_id, student_id)
        name = slugify(f"{student_id} {snap.get_course(course_id).short_name}") or "dossier"
        return _archive_response(data, f"{name}{portability.ARCHIVE_EXTENSION}")

    @app.post(f"{API_PREFIX}/import", dependencies=[guarded])
    async def import_upload(
        file: UploadFile,
        destination: str = Form(...),
        name: str | None = Form(None),
    ):
        data = await file.read()
        dest = portability.parse_destination(destination, name=name)
        summary = None
        if isinstance(dest, portability.MergeInto):
            archive = portability.read_archive(data)
            summary = portability.merge_into(store, dest.course_id, archive)
            course_id = dest.course_id
        else:
            course_id = portability.import_archive(store, data, dest)
        persist()
        return {
            "course_id": course_id,
            "summary": None
            if summary is None
            else {
                "students_added": summary.students_added,
                "assessments_added": summary.assessments_added,
                "assessments_skipped": summary.assessments_skipped,
                "competencies_added": summary.competencies_added,
            },
        }

    if config.frontend_dir and Path(config.frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=config.frontend_dir, html=True), name="frontend")

    return app


def check_port_free(host: str, port: int) -> None:
    """Raise PortInUse before uvicorn swallows the bind failure."""
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        try:
            sock.bind((host, port))
        except OSError as exc:
            raise PortInUse(f"cannot bind {host}:{port}: {exc}", host=host, port=port) from exc


def serve(config: ServiceConfig) -> None:
    """Run the service under uvicorn (refusing a corrupt store or a busy port
    up front)."""
    import uvicorn

    check_port_free(config.host, config.port)
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
