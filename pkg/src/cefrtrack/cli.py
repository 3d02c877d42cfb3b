"""Operator command line for every workflow, against the local store file or
a remote service (--server). Domain errors exit 1 with the stable error code
on stderr; usage errors exit 2.
"""

from __future__ import annotations

import contextlib
import os
import sys
from pathlib import Path

import click
import httpx

from . import portability, reports
from .errors import ConfigError, TrackerError
from .model import PlacementTable, Student, format_rating, parse_level, place_student
from .reports import grader_report_table, user_report_table
from .store import Store, fresh_student_id

STORE_FILENAME = "store.json"
LOCK_FILENAME = "store.lock"


class LocalBackend:
    """Direct store-file access with an exclusive lock around mutations."""

    def __init__(self, data_dir: str, placement_table: str | None = None):
        self.data_dir = Path(data_dir)
        self.store_path = self.data_dir / STORE_FILENAME
        self.placement_path = placement_table
        self._store: Store | None = None

    def load(self) -> Store:
        if self._store is None:
            if self.store_path.exists():
                self._store = Store.load(self.store_path)
            else:
                self._store = Store()
        return self._store

    def save(self) -> None:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.load().save(self.store_path)

    @contextlib.contextmanager
    def mutate(self):
        """Exclusive file lock across load-mutate-save."""
        import fcntl

        self.data_dir.mkdir(parents=True, exist_ok=True)
        with open(self.data_dir / LOCK_FILENAME, "w") as lockfile:
            fcntl.flock(lockfile, fcntl.LOCK_EX)
            try:
                yield self.load()
                self.save()
            finally:
                fcntl.flock(lockfile, fcntl.LOCK_UN)

    def placement_table(self) -> PlacementTable:
        path = self.placement_path
        if not path:
            default = self.data_dir / "placement.csv"
            if default.exists():
                path = str(default)
        if not path:
            raise ConfigError(
                "no placement table configured (use --placement-table or CTRACK_PLACEMENT_TABLE)"
            )
        return PlacementTable.from_csv(Path(path).read_bytes())

    def resolve_course(self, token: str) -> str:
        store = self.load()
        if store.has_course(token):
            return token
        matches = [c.id for c in store.courses() if c.short_name == token]
        if len(matches) == 1:
            return matches[0]
        from .errors import UnknownCourse

        raise UnknownCourse(f"unknown course: {token!r}", id=token)


class HttpBackend:
    """The same commands spoken over the service API."""

    def __init__(self, server: str, token: str | None = None):
        self.client = _make_client(server, token)

    def request(self, method: str, path: str, **kwargs) -> httpx.Response:
        response = self.client.request(method, f"/api/v1{path}", **kwargs)
        if response.status_code >= 400:
            try:
                payload = response.json()
                code, message = payload["code"], payload["message"]
            except Exception:
                code, message = "http.error", f"HTTP {response.status_code}"
            error = TrackerError(message)
            error.code = code
            raise error
        return response

    def resolve_course(self, token: str) -> str:
        courses = self.request("GET", "/courses").json()
        if any(c["id"] == token for c in courses):
            return token
        matches = [c["id"] for c in courses if c["short_name"] == token]
        if len(matches) == 1:
            return matches[0]
        from .errors import UnknownCourse

        raise UnknownCourse(f"unknown course: {token!r}", id=token)


def _make_client(server: str, token: str | None) -> httpx.Client:
    headers = {"Authorization": f"Bearer {token}"} if token else {}
    return httpx.Client(base_url=server, headers=headers, timeout=30.0)


class Session:
    def __init__(self, data_dir: str, server: str | None, token: str | None, placement_table: str | None):
        self.server = server
        self.local = None if server else LocalBackend(data_dir, placement_table)
        self.remote = HttpBackend(server, token) if server else None
        self.data_dir = data_dir
        self.placement_path = placement_table


class DomainErrorGroup(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except TrackerError as exc:
            click.echo(f"{exc.code}: {exc.message}", err=True)
            ctx.exit(1)


@click.group(cls=DomainErrorGroup)
@click.option("--data-dir", envvar="CTRACK_DATA_DIR", default=".", show_default=True, help="Store directory (local mode).")
@click.option("--server", envvar="CTRACK_SERVER", default=None, help="Service URL; switches to remote mode.")
@click.option("--token", envvar="CTRACK_TOKEN", default=None, help="Bearer token for remote mode.")
@click.option("--placement-table", envvar="CTRACK_PLACEMENT_TABLE", default=None, help="Placement CSV path.")
@click.pass_context
def cli(ctx, data_dir, server, token, placement_table):
    """Track CEFR competencies: grade, report, and move records between schools."""
    ctx.obj = Session(data_dir, server, token, placement_table)


@cli.group()
def outcomes():
    """Taxonomy ingestion."""


@outcomes.command("import")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--scope", type=click.Choice(["standard", "custom"]), default="standard", show_default=True)
@click.option("--course", default=None, help="Course id (custom scope).")
@click.pass_obj
def outcomes_import(session: Session, file, scope, course):
    """Import an outcomes CSV (title,slug,kind,description)."""
    data = Path(file).read_bytes()
    if session.remote:
        params = {"scope": scope}
        if course:
            params["course"] = course
        result = session.remote.request("POST", "/outcomes/import", params=params, content=data).json()
        click.echo(f"imported {result['added']} competencies")
        return
    with session.local.mutate() as store:
        added = portability.import_outcomes_csv(store, data, scope=scope, course_id=course)
    click.echo(f"imported {len(added)} competencies")


@cli.group()
def student():
    """Student records."""


@student.command("add")
@click.option("--id", "student_id", default=None, help="Defaults to a slug of the name.")
@click.option("--surname", required=True)
@click.option("--first-name", required=True)
@click.option("--email", required=True)
@click.pass_obj
def student_add(session: Session, student_id, surname, first_name, email):
    if session.remote:
        body = {"id": student_id, "surname": surname, "first_name": first_name, "email": email}
        created = session.remote.request("POST", "/students", json=body).json()
        click.echo(f"added student {created['id']}")
        return
    with session.local.mutate() as store:
        sid = student_id or fresh_student_id(store, first_name, surname)
        store.add_student(Student(id=sid, surname=surname, first_name=first_name, email=email))
    click.echo(f"added student {sid}")


@cli.group()
def course():
    """Per-level gradebooks."""


@course.command("create")
@click.option("--id", "course_id", default=None)
@click.option("--full-name", required=True)
@click.option("--short-name", required=True)
@click.option("--level", required=True)
@click.pass_obj
def course_create(session: Session, course_id, full_name, short_name, level):
    """Create a course preloaded with the standard competencies of its level."""
    if session.remote:
        body = {"id": course_id, "full_name": full_name, "short_name": short_name, "level": level}
        created = session.remote.request("POST", "/courses", json=body).json()
        click.echo(f"created course {created['id']} with {len(created['competency_ids'])} competencies")
        return
    with session.local.mutate() as store:
        created = store.create_course(
            full_name=full_name, short_name=short_name, level=parse_level(level), course_id=course_id
        )
    click.echo(f"created course {created.id} with {len(created.competency_ids)} competencies")


@cli.command()
@click.argument("course_token")
@click.argument("student_id")
@click.pass_obj
def enroll(session: Session, course_token, student_id):
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        session.remote.request("POST", f"/courses/{cid}/enroll", json={"student": student_id})
    else:
        with session.local.mutate() as store:
            store.enroll(session.local.resolve_course(course_token), student_id)
    click.echo(f"enrolled {student_id}")


@cli.command()
@click.argument("course_token")
@click.argument("student_id")
@click.pass_obj
def unenroll(session: Session, course_token, student_id):
    """Remove from the roster; the student's history stays in the store."""
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        session.remote.request("DELETE", f"/courses/{cid}/enroll/{student_id}")
    else:
        with session.local.mutate() as store:
            store.unenroll(session.local.resolve_course(course_token), student_id)
    click.echo(f"unenrolled {student_id}")


@cli.command()
@click.argument("student_id")
@click.argument("competency_id")
@click.argument("score", type=int)
@click.option("--feedback", default=None)
@click.option("--assessor", default="educator", show_default=True)
@click.pass_obj
def grade(session: Session, student_id, competency_id, score, feedback, assessor):
    """Record an assessment and print the new current rating."""
    if session.remote:
        body = {
            "student": student_id,
            "competency": competency_id,
            "score": score,
            "feedback": feedback,
            "assessor": assessor,
        }
        result = session.remote.request("PUT", "/grades", json=body).json()
        click.echo(f"current rating: {result['current_rating']}")
        return
    with session.local.mutate() as store:
        store.record_assessment(student_id, competency_id, score, feedback=feedback, assessor=assessor)
        rating = store.current_rating(student_id, competency_id)
    click.echo(f"current rating: {format_rating(rating)}")


def _render_table(rows: list[list[str]]) -> str:
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


@cli.group()
def report():
    """Grader and user reports."""


@report.command("grader")
@click.argument("course_token")
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "tsv"]), default="table", show_default=True)
@click.pass_obj
def report_grader(session: Session, course_token, fmt):
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        if fmt == "table":
            payload = session.remote.request("GET", f"/courses/{cid}/grader-report").json()
            rows = _grader_rows_from_json(payload)
            click.echo(_render_table(rows))
        else:
            data = session.remote.request(
                "GET", f"/courses/{cid}/grader-report", params={"format": fmt}
            ).content
            sys.stdout.buffer.write(data)
        return
    store = session.local.load()
    rep = reports.grader_report(store, session.local.resolve_course(course_token))
    if fmt == "table":
        click.echo(_render_table(grader_report_table(rep)))
    else:
        sys.stdout.buffer.write(reports.export_report(rep, fmt))


def _grader_rows_from_json(payload: dict) -> list[list[str]]:
    header = ["Surname", "First name", "Email address"] + [c["title"] for c in payload["columns"]] + ["Course total"]
    rows = [header]
    for row in payload["rows"]:
        s = row["student"]
        rows.append(
            [s["surname"], s["first_name"], s["email"]]
            + [format_rating(cell) for cell in row["cells"]]
            + [format_rating(row["course_total"])]
        )
    if payload["rows"]:
        rows.append(["Overall average", "", ""] + [format_rating(f) for f in payload["footer"]] + [""])
    return rows


@report.command("user")
@click.argument("course_token")
@click.argument("student_id")
@click.option("--format", "fmt", type=click.Choice(["table", "csv", "tsv"]), default="table", show_default=True)
@click.pass_obj
def report_user(session: Session, course_token, student_id, fmt):
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        if fmt == "table":
            payload = session.remote.request("GET", f"/courses/{cid}/students/{student_id}/user-report").json()
            rows = [["Grade item", "Grade", "Range", "Feedback"]]
            rows.append([payload["course_name"], format_rating(payload["aggregate"]), "", ""])
            for row in payload["rows"]:
                rows.append([row["title"], format_rating(row["grade"]), row["range"], row["feedback"]])
            click.echo(_render_table(rows))
        else:
            data = session.remote.request(
                "GET", f"/courses/{cid}/students/{student_id}/user-report", params={"format": fmt}
            ).content
            sys.stdout.buffer.write(data)
        return
    store = session.local.load()
    rep = reports.user_report(store, student_id, session.local.resolve_course(course_token))
    if fmt == "table":
        click.echo(_render_table(user_report_table(rep)))
    else:
        sys.stdout.buffer.write(reports.export_report(rep, fmt))


@cli.command()
@click.argument("course_token")
@click.argument("competency_id")
@click.pass_obj
def gaps(session: Session, course_token, competency_id):
    """Who has studied a competency, who hasn't, and whether to teach it."""
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        payload = session.remote.request("GET", f"/courses/{cid}/gaps/{competency_id}").json()
        studied, unstudied = payload["studied"], payload["unstudied"]
        include = payload["include_in_curriculum"]
    else:
        store = session.local.load()
        analysis = reports.gap_analysis(store, session.local.resolve_course(course_token), competency_id)
        studied, unstudied = list(analysis.studied), list(analysis.unstudied)
        include = analysis.include_in_curriculum
    click.echo(f"studied ({len(studied)}): {', '.join(studied) or '-'}")
    click.echo(f"unstudied ({len(unstudied)}): {', '.join(unstudied) or '-'}")
    click.echo(f"include in curriculum: {'yes' if include else 'no'}")


@cli.command()
@click.argument("student_id")
@click.argument("level")
@click.option("--threshold", type=int, default=4, show_default=True)
@click.pass_obj
def checklist(session: Session, student_id, level, threshold):
    """Is a level satisfactorily completed, and what is still missing."""
    if session.remote:
        payload = session.remote.request(
            "GET", f"/students/{student_id}/checklist/{level}", params={"threshold": threshold}
        ).json()
        complete, missing = payload["complete"], [m["title"] for m in payload["missing"]]
    else:
        store = session.local.load()
        result = reports.level_checklist(store, student_id, parse_level(level), threshold)
        complete, missing = result.complete, [c.title for c in result.missing]
    if complete:
        click.echo(f"{level} complete: every competency at or above {threshold}")
    else:
        click.echo(f"{level} not complete, {len(missing)} missing:")
        for title in missing:
            click.echo(f"  {title}")


@cli.command()
@click.argument("test")
@click.argument("score", type=float)
@click.pass_obj
def place(session: Session, test, score):
    """Map an external test score to a CEFR level via the placement table."""
    if session.remote:
        payload = session.remote.request("POST", "/placement", json={"test": test, "score": score}).json()
        click.echo(payload["level"])
        return
    table = session.local.placement_table()
    click.echo(place_student(test, score, table).value)


@cli.command()
@click.argument("course_token")
@click.option("--student", "student_id", default=None, help="Export a single-student dossier.")
@click.option("-o", "--output", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def export(session: Session, course_token, student_id, output):
    """Write a portable .ctar archive for a course or one student."""
    if session.remote:
        cid = session.remote.resolve_course(course_token)
        path = f"/courses/{cid}/export/{student_id}" if student_id else f"/courses/{cid}/export"
        data = session.remote.request("GET", path).content
    else:
        store = session.local.load()
        cid = session.local.resolve_course(course_token)
        if student_id:
            data = portability.export_dossier(store, cid, student_id)
        else:
            data = portability.export_archive(store, cid)
    Path(output).write_bytes(data)
    click.echo(f"wrote {output} ({len(data)} bytes)")


@cli.command("import")
@click.argument("file", type=click.Path(exists=True, dir_okay=False))
@click.option("--into", required=True, help="new, merge:<course>, or replace:<course>.")
@click.option("--name", default=None, help="Full-name override when restoring as new.")
@click.pass_obj
def import_cmd(session: Session, file, into, name):
    """Restore an archive: as a new course, merged, or replacing contents."""
    data = Path(file).read_bytes()
    dest = portability.parse_destination(into, name=name)
    if session.remote:
        result = session.remote.request(
            "POST",
            "/import",
            files={"file": (os.path.basename(file), data, "application/zip")},
            data={"destination": into, **({"name": name} if name else {})},
        ).json()
        course_id, summary = result["course_id"], result["summary"]
        click.echo(f"imported into course {course_id}")
        if summary:
            _echo_summary(summary)
        return
    with session.local.mutate() as store:
        if isinstance(dest, portability.MergeInto):
            archive = portability.read_archive(data)
            summary = portability.merge_into(store, dest.course_id, archive)
            click.echo(f"imported into course {dest.course_id}")
            _echo_summary(
                {
                    "students_added": summary.students_added,
                    "assessments_added": summary.assessments_added,
                    "assessments_skipped": summary.assessments_skipped,
                    "competencies_added": summary.competencies_added,
                }
            )
        else:
            course_id = portability.import_archive(store, data, dest)
            click.echo(f"imported into course {course_id}")


def _echo_summary(summary: dict) -> None:
    click.echo(
        "merge summary: "
        f"{summary['students_added']} students added, "
        f"{summary['assessments_added']} assessments added, "
        f"{summary['assessments_skipped']} skipped, "
        f"{summary['competencies_added']} competencies added"
    )


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--frontend", default=None, help="Static bundle directory to serve at /.")
@click.option("--checklist-threshold", type=int, default=None)
@click.pass_obj
def serve(session: Session, host, port, frontend, checklist_threshold):
    """Run the HTTP service over the data directory."""
    from .service import ServiceConfig
    from .service import serve as run_service

    config = ServiceConfig.from_env(
        data_dir=session.data_dir,
        host=host,
        port=port,
        placement_table=session.placement_path,
        frontend_dir=frontend,
        checklist_threshold=checklist_threshold,
    )
    run_service(config)


def main():
    cli()


if __name__ == "__main__":
    main()
