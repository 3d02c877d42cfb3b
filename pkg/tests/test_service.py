from __future__ import annotations

import io
import json

import pytest
from fastapi.testclient import TestClient

from conftest import SHOULD_HAVE, WRITERS, bundled_outcomes_csv
from cefrtrack.errors import CorruptStore
from cefrtrack.reports import export_report, grader_report
from cefrtrack.service import ServiceConfig, create_app

MODALS_PAST = "b1-modals-past"


@pytest.fixture
def client(tmp_path):
    config = ServiceConfig(data_dir=str(tmp_path))
    app = create_app(config)
    with TestClient(app) as c:
        c.app_config = config
        yield c


def seed_course(client, short_name="CEFR B1 Comp", course_id="b1"):
    """Outcomes + the five writers + a B1 course over the whole level."""
    r = client.post("/api/v1/outcomes/import", content=bundled_outcomes_csv())
    assert r.status_code == 200, r.text
    for s in WRITERS:
        r = client.post(
            "/api/v1/students",
            json={"id": s.id, "surname": s.surname, "first_name": s.first_name, "email": s.email},
        )
        assert r.status_code == 201, r.text
    r = client.post(
        "/api/v1/courses",
        json={
            "id": course_id,
            "full_name": "CEFR B1 Grammar Competencies",
            "short_name": short_name,
            "level": "B1",
        },
    )
    assert r.status_code == 201, r.text
    for s in WRITERS:
        assert client.post(f"/api/v1/courses/{course_id}/enroll", json={"student": s.id}).status_code == 200
    return r.json()


class TestHealthAndLifecycle:
    def test_empty_data_dir(self, client):
        r = client.get("/api/v1/health")
        assert r.status_code == 200
        assert r.json() == {"status": "ok", "courses": 0}

    def test_state_survives_restart(self, tmp_path):
        config = ServiceConfig(data_dir=str(tmp_path))
        with TestClient(create_app(config)) as client:
            seed_course(client)
            client.put(
                "/api/v1/grades",
                json={"student": "gm", "competency": MODALS_PAST, "score": 5},
            )
        with TestClient(create_app(ServiceConfig(data_dir=str(tmp_path)))) as reborn:
            assert reborn.get("/api/v1/health").json()["courses"] == 1
            report = reborn.get("/api/v1/courses/b1/grader-report").json()
            col = [c["id"] for c in report["columns"]].index(MODALS_PAST)
            gm_row = next(r for r in report["rows"] if r["student"]["id"] == "gm")
            assert gm_row["cells"][col] == 5

    def test_corrupt_store_refused_at_startup(self, tmp_path):
        config = ServiceConfig(data_dir=str(tmp_path))
        with TestClient(create_app(config)) as client:
            seed_course(client)
        store_file = tmp_path / "store.json"
        doc = json.loads(store_file.read_text())
        doc["students"].append({"id": "x", "surname": "Forged", "first_name": "F", "email": "f@x.com"})
        store_file.write_text(json.dumps(doc))  # checksum now wrong
        with pytest.raises(CorruptStore):
            create_app(ServiceConfig(data_dir=str(tmp_path)))


class TestGrading:
    def test_record_and_current_rating(self, client):
        seed_course(client)
        r = client.put(
            "/api/v1/grades",
            json={"student": "gm", "competency": MODALS_PAST, "score": 3},
        )
        assert r.status_code == 200
        assert r.json()["current_rating"] == 3
        r = client.put(
            "/api/v1/grades",
            json={"student": "gm", "competency": MODALS_PAST, "score": 5, "feedback": "mastered"},
        )
        assert r.json()["current_rating"] == 5

    def test_score_out_of_range_is_400_with_code(self, client):
        seed_course(client)
        r = client.put(
            "/api/v1/grades",
            json={"student": "gm", "competency": MODALS_PAST, "score": 7},
        )
        assert r.status_code == 400
        assert r.json()["code"] == "score.out_of_range"

    def test_unknown_student_404(self, client):
        seed_course(client)
        r = client.put(
            "/api/v1/grades",
            json={"student": "nobody", "competency": MODALS_PAST, "score": 4},
        )
        assert r.status_code == 404
        assert r.json()["code"] == "student.unknown"

    def test_malformed_body_400(self, client):
        r = client.put("/api/v1/grades", json={"student": "gm"})
        assert r.status_code == 400
        assert r.json()["code"] == "request.invalid"


class TestReports:
    def test_grader_report_unknown_course_404(self, client):
        r = client.get("/api/v1/courses/phantom/grader-report")
        assert r.status_code == 404
        assert r.json()["code"] == "course.unknown"

    def test_grader_csv_matches_module_export(self, tmp_path):
        config = ServiceConfig(data_dir=str(tmp_path))
        app = create_app(config)
        with TestClient(app) as client:
            seed_course(client)
            client.put("/api/v1/grades", json={"student": "gm", "competency": SHOULD_HAVE, "score": 4})
            client.put("/api/v1/grades", json={"student": "rilke", "competency": SHOULD_HAVE, "score": 5})
            via_http = client.get("/api/v1/courses/b1/grader-report", params={"format": "csv"})
            assert via_http.headers["content-type"].startswith("text/csv")
            store = app.state.store
            direct = export_report(grader_report(store.snapshot(), "b1"), "csv")
            assert via_http.content == direct

    def test_user_report_endpoint(self, client):
        seed_course(client)
        client.put("/api/v1/grades", json={"student": "gm", "competency": MODALS_PAST, "score": 3})
        r = client.get("/api/v1/courses/b1/students/gm/user-report")
        assert r.status_code == 200
        payload = r.json()
        row = next(row for row in payload["rows"] if row["title"] == "B1 Modals: Past")
        assert row["grade"] == 3
        assert row["range"] == "1-5"

    def test_gap_endpoint(self, client):
        seed_course(client)
        client.put("/api/v1/grades", json={"student": "gm", "competency": SHOULD_HAVE, "score": 4})
        r = client.get(f"/api/v1/courses/b1/gaps/{SHOULD_HAVE}")
        payload = r.json()
        assert payload["studied"] == ["gm"]
        assert len(payload["unstudied"]) == 4

    def test_checklist_endpoint_with_threshold(self, client):
        seed_course(client)
        r = client.get("/api/v1/students/gm/checklist/B1", params={"threshold": 1})
        assert r.status_code == 200
        assert r.json()["complete"] is False  # everything unrecorded

    def test_listing_order(self, client):
        seed_course(client)
        students = client.get("/api/v1/students").json()
        assert [s["surname"] for s in students] == ["Garcia-Marquez", "Goswami", "Oe", "Rilke", "Sembène"]


class TestPlacementEndpoint:
    def test_placement_with_table(self, tmp_path):
        table = tmp_path / "placement.csv"
        table.write_text("test,min,max,level\nTOEIC,225,549,B1\n")
        config = ServiceConfig(data_dir=str(tmp_path), placement_table=str(table))
        with TestClient(create_app(config)) as client:
            r = client.post("/api/v1/placement", json={"test": "TOEIC", "score": 300})
            assert r.json()["level"] == "B1"

    def test_placement_unconfigured_is_unknown_test(self, client):
        r = client.post("/api/v1/placement", json={"test": "TOEIC", "score": 300})
        assert r.status_code == 404
        assert r.json()["code"] == "placement.unknown_test"


class TestPortabilityEndpoints:
    def test_export_then_import_new(self, client):
        seed_course(client)
        client.put("/api/v1/grades", json={"student": "gm", "competency": MODALS_PAST, "score": 4})
        exported = client.get("/api/v1/courses/b1/export")
        assert exported.status_code == 200
        assert exported.headers["content-type"] == "application/zip"
        assert ".ctar" in exported.headers["content-disposition"]

        r = client.post(
            "/api/v1/import",
            files={"file": ("b1.ctar", io.BytesIO(exported.content), "application/zip")},
            data={"destination": "new"},
        )
        assert r.status_code == 200
        new_id = r.json()["course_id"]
        courses = client.get("/api/v1/courses").json()
        created = next(c for c in courses if c["id"] == new_id)
        assert created["full_name"].endswith("copy 1")

    def test_dossier_export_and_merge_with_summary(self, client):
        seed_course(client)
        client.put("/api/v1/grades", json={"student": "gm", "competency": MODALS_PAST, "score": 4})
        dossier = client.get("/api/v1/courses/b1/export/gm")
        assert dossier.status_code == 200

        r = client.post(
            "/api/v1/courses",
            json={"id": "b1-other", "full_name": "Other B1", "short_name": "B1 other", "level": "B1"},
        )
        assert r.status_code == 201
        merged = client.post(
            "/api/v1/import",
            files={"file": ("gm.ctar", io.BytesIO(dossier.content), "application/zip")},
            data={"destination": "merge:b1-other"},
        )
        assert merged.status_code == 200
        # same installation: his history is already in the global store, so the
        # record is skipped; the merge's job here is the enrollment
        summary = merged.json()["summary"]
        assert summary["assessments_added"] == 0
        assert summary["assessments_skipped"] == 1
        report = client.get("/api/v1/courses/b1-other/grader-report").json()
        assert [row["student"]["id"] for row in report["rows"]] == ["gm"]
        col = [c["id"] for c in report["columns"]].index(MODALS_PAST)
        assert report["rows"][0]["cells"][col] == 4

    def test_merge_level_mismatch_is_422(self, client):
        seed_course(client)
        r = client.post(
            "/api/v1/courses",
            json={"id": "a2", "full_name": "A2 intake", "short_name": "A2 intake", "level": "A2"},
        )
        assert r.status_code == 201
        a2_archive = client.get("/api/v1/courses/a2/export").content
        r = client.post(
            "/api/v1/import",
            files={"file": ("a2.ctar", io.BytesIO(a2_archive), "application/zip")},
            data={"destination": "merge:b1"},
        )
        assert r.status_code == 422
        assert r.json()["code"] == "archive.level_mismatch"

    def test_truncated_archive_is_422_corrupt(self, client):
        seed_course(client)
        r = client.post(
            "/api/v1/import",
            files={"file": ("x.ctar", io.BytesIO(b"garbage"), "application/zip")},
            data={"destination": "new"},
        )
        assert r.status_code == 422
        assert r.json()["code"] == "archive.corrupt"

    def test_duplicate_short_name_is_409(self, client):
        seed_course(client)
        r = client.post(
            "/api/v1/courses",
            json={"full_name": "Again", "short_name": "CEFR B1 Comp", "level": "B1"},
        )
        assert r.status_code == 409
        assert r.json()["code"] == "course.duplicate_short_name"

    def test_outcomes_custom_scope_unknown_course_404(self, client):
        r = client.post(
            "/api/v1/outcomes/import",
            params={"scope": "custom", "course": "ghost"},
            content=bundled_outcomes_csv(),
        )
        assert r.status_code == 404


class TestServePreflight:
    def test_busy_port_detected_before_startup(self):
        import socket

        from cefrtrack.errors import PortInUse
        from cefrtrack.service import check_port_free

        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
            sock.bind(("127.0.0.1", 0))
            _, port = sock.getsockname()
            sock.listen(1)
            with pytest.raises(PortInUse):
                check_port_free("127.0.0.1", port)

    def test_free_port_accepted(self):
        from cefrtrack.service import check_port_free

        check_port_free("127.0.0.1", 0)  # ephemeral bind succeeds


class TestAuth:
    def test_token_required_when_configured(self, tmp_path):
        config = ServiceConfig(data_dir=str(tmp_path), token="sesame")
        with TestClient(create_app(config)) as client:
            assert client.get("/api/v1/health").status_code == 200  # health stays open
            assert client.get("/api/v1/courses").status_code == 401
            assert (
                client.get("/api/v1/courses", headers={"Authorization": "Bearer sesame"}).status_code
                == 200
            )


class TestRenameAndEnrollment:
    def test_rename_endpoint(self, client):
        seed_course(client)
        r = client.patch(
            "/api/v1/courses/b1",
            json={"full_name": "G Garcia-Marquez CEFR B1 Grammar Competencies"},
        )
        assert r.status_code == 200
        assert r.json()["full_name"].startswith("G Garcia-Marquez")
        assert r.json()["short_name"] == "CEFR B1 Comp"  # untouched by partial rename

    def test_unenroll_keeps_history(self, client):
        seed_course(client)
        client.put("/api/v1/grades", json={"student": "gm", "competency": MODALS_PAST, "score": 4})
        r = client.delete("/api/v1/courses/b1/enroll/gm")
        assert r.status_code == 200
        assert "gm" not in r.json()["roster"]
        dossier = client.get("/api/v1/courses/b1/export").content  # course archive without gm
        report = client.get("/api/v1/courses/b1/grader-report").json()
        assert all(row["student"]["id"] != "gm" for row in report["rows"])
