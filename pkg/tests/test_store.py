from __future__ import annotations

import json
import random
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    SHOULD_HAVE,
    WRITERS,
    Ticker,
    bundled_outcomes_csv,
    make_golden_course,
    store_state,
)
from cefrtrack.errors import (
    CorruptStore,
    DuplicateShortName,
    StoreIoError,
    StudentNotEnrolled,
    UnknownCompetency,
    UnknownCourse,
    UnknownStudent,
)
from cefrtrack.model import CefrLevel, Competency, CompetencyKind, Student
from cefrtrack.portability import import_outcomes_csv
from cefrtrack.store import (
    SOURCE_IMPORT,
    SOURCE_LOCAL,
    Assessment,
    Store,
    format_timestamp,
    parse_timestamp,
    truncate_ms,
)

T0 = datetime(2013, 6, 18, 0, 17, 0, tzinfo=timezone.utc)

MODALS_PAST = "b1-modals-past"


@pytest.fixture
def b1_store(taxonomy_store):
    make_golden_course(taxonomy_store, competency_ids=None)
    return taxonomy_store


class TestTimestamps:
    def test_format_is_rfc3339_with_milliseconds(self):
        dt = datetime(2013, 6, 18, 0, 17, 0, 123456, tzinfo=timezone.utc)
        assert format_timestamp(dt) == "2013-06-18T00:17:00.123Z"

    def test_parse_round_trips(self):
        text = "2013-06-18T00:17:00.123Z"
        assert format_timestamp(parse_timestamp(text)) == text

    def test_parse_accepts_offset_form(self):
        assert parse_timestamp("2013-06-18T00:17:00.123+00:00") == parse_timestamp(
            "2013-06-18T00:17:00.123Z"
        )

    def test_truncates_to_milliseconds(self):
        dt = datetime(2013, 6, 18, 0, 17, 0, 123999, tzinfo=timezone.utc)
        assert truncate_ms(dt).microsecond == 123000

    def test_bad_timestamp_rejected(self):
        with pytest.raises(CorruptStore):
            parse_timestamp("yesterday-ish")


class TestRecordAssessment:
    def test_reassessment_keeps_both_and_latest_wins(self, b1_store):
        # previously a 3 on past modals, then a 5 in the last lesson
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        b1_store.record_assessment("gm", MODALS_PAST, 5)
        assert len(b1_store.history("gm", MODALS_PAST)) == 2
        assert b1_store.current_rating("gm", MODALS_PAST) == 5

    def test_first_assessment_base_case(self, b1_store):
        a = b1_store.record_assessment("gm", SHOULD_HAVE, 4)
        assert a.timestamp.tzinfo is not None
        assert len(b1_store.history("gm", SHOULD_HAVE)) == 1
        assert b1_store.current_rating("gm", SHOULD_HAVE) == 4

    def test_unknown_competency(self, b1_store):
        with pytest.raises(UnknownCompetency):
            b1_store.record_assessment("gm", "b9-time-travel", 4)

    def test_unknown_student(self, b1_store):
        with pytest.raises(UnknownStudent):
            b1_store.record_assessment("nobody", MODALS_PAST, 4)

    def test_student_must_be_enrolled_in_a_course_with_the_competency(self, taxonomy_store):
        make_golden_course(taxonomy_store, competency_ids=None, enroll_all=False)
        with pytest.raises(StudentNotEnrolled):
            taxonomy_store.record_assessment("gm", MODALS_PAST, 4)

    def test_timestamps_come_from_the_store_clock(self, b1_store, ticker):
        before = ticker.current
        a = b1_store.record_assessment("gm", MODALS_PAST, 3)
        assert a.timestamp == before

    def test_recording_changes_only_that_pair(self, b1_store):
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        others = {
            (s.id, c): b1_store.current_rating(s.id, c)
            for s in WRITERS
            for c in (MODALS_PAST, SHOULD_HAVE)
            if (s.id, c) != ("gm", MODALS_PAST)
        }
        b1_store.record_assessment("gm", MODALS_PAST, 5)
        for (sid, cid), rating in others.items():
            assert b1_store.current_rating(sid, cid) == rating


class TestCurrentRating:
    def test_no_history_is_unrecorded(self, b1_store):
        assert b1_store.current_rating("gm", MODALS_PAST) is None

    def test_unknown_student_rejected(self, b1_store):
        with pytest.raises(UnknownStudent):
            b1_store.current_rating("nobody", MODALS_PAST)

    def test_equal_timestamp_ties_break_to_higher_score(self, b1_store):
        # oracle: brute-force over all 25 score pairs at one shared timestamp
        for s1 in range(1, 6):
            for s2 in range(1, 6):
                expected = s1 if s1 >= s2 else s2
                store = Store(clock=lambda: T0)
                import_outcomes_csv(store, bundled_outcomes_csv(), scope="standard")
                make_golden_course(store, competency_ids=[MODALS_PAST])
                store.record_assessment("gm", MODALS_PAST, s1)
                store.record_assessment("gm", MODALS_PAST, s2)
                assert store.current_rating("gm", MODALS_PAST) == expected, (s1, s2)

    def test_spec_example_two_then_four_at_same_instant(self, taxonomy_store):
        frozen = Store(clock=lambda: T0)
        import_outcomes_csv(frozen, bundled_outcomes_csv(), scope="standard")
        make_golden_course(frozen, competency_ids=[MODALS_PAST])
        frozen.record_assessment("gm", MODALS_PAST, 2)
        frozen.record_assessment("gm", MODALS_PAST, 4)
        assert frozen.current_rating("gm", MODALS_PAST) == 4

    def test_local_beats_import_when_timestamp_and_score_tie(self, b1_store):
        ts = T0
        imported = Assessment(
            student_id="gm",
            competency_id=MODALS_PAST,
            score=3,
            feedback="from the old school",
            assessor="import",
            timestamp=ts,
            source=SOURCE_IMPORT,
        )
        local = Assessment(
            student_id="gm",
            competency_id=MODALS_PAST,
            score=3,
            feedback="seen here",
            assessor="rb",
            timestamp=ts,
            source=SOURCE_LOCAL,
        )
        assert b1_store.append_imported(imported)
        assert b1_store.append_imported(local)
        winner = b1_store.current_assessment("gm", MODALS_PAST)
        assert winner.source == SOURCE_LOCAL

    @given(
        entries=st.lists(
            st.tuples(st.integers(min_value=0, max_value=10_000), st.integers(min_value=1, max_value=5)),
            min_size=1,
            max_size=12,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_latest_timestamp_always_wins(self, entries):
        # monotone recency: strictly later appends become the current rating
        offsets = [off for off, _ in entries]
        store = Store(clock=lambda: T0)
        import_outcomes_csv(store, bundled_outcomes_csv(), scope="standard")
        make_golden_course(store, competency_ids=[MODALS_PAST])
        for off, score in entries:
            store.append_imported(
                Assessment(
                    student_id="gm",
                    competency_id=MODALS_PAST,
                    score=score,
                    feedback=None,
                    assessor="import",
                    timestamp=T0 + timedelta(milliseconds=off),
                    source=SOURCE_IMPORT,
                )
            )
        latest = max(offsets)
        best_at_latest = max(score for off, score in entries if off == latest)
        assert store.current_rating("gm", MODALS_PAST) == best_at_latest


class TestEnrollment:
    def test_enroll_is_idempotent(self, b1_store):
        course = b1_store.courses()[0]
        size = len(b1_store.get_course(course.id).roster)
        b1_store.enroll(course.id, "gm")
        assert len(b1_store.get_course(course.id).roster) == size

    def test_unenroll_preserves_assessments(self, b1_store):
        course = b1_store.courses()[0]
        b1_store.record_assessment("gm", MODALS_PAST, 4)
        b1_store.unenroll(course.id, "gm")
        assert "gm" not in b1_store.get_course(course.id).roster
        dossier = b1_store.dossier("gm")
        assert [a.score for a in dossier.history] == [4]
        assert b1_store.current_rating("gm", MODALS_PAST) == 4

    def test_unenroll_non_member_is_noop(self, taxonomy_store):
        course = make_golden_course(taxonomy_store, competency_ids=None, enroll_all=False)
        taxonomy_store.unenroll(course.id, "gm")  # not enrolled: no error

    def test_unknown_course(self, b1_store):
        with pytest.raises(UnknownCourse):
            b1_store.unenroll("phantom", "gm")
        with pytest.raises(UnknownCourse):
            b1_store.enroll("phantom", "gm")

    def test_roster_sorted_by_surname_then_first_name(self, b1_store):
        course = b1_store.courses()[0]
        surnames = [s.surname for s in b1_store.roster(course.id)]
        assert surnames == ["Garcia-Marquez", "Goswami", "Oe", "Rilke", "Sembène"]


class TestRenameCourse:
    def test_rename(self, b1_store):
        course = b1_store.courses()[0]
        b1_store.rename_course(
            course.id, "G Garcia-Marquez CEFR B1 Grammar Competencies", "G Garcia-Marquez B1"
        )
        updated = b1_store.get_course(course.id)
        assert updated.full_name == "G Garcia-Marquez CEFR B1 Grammar Competencies"
        assert updated.id == course.id

    def test_rename_to_own_name_is_noop_success(self, b1_store):
        course = b1_store.courses()[0]
        b1_store.rename_course(course.id, course.full_name, course.short_name)
        assert b1_store.get_course(course.id).short_name == course.short_name

    def test_rename_to_taken_short_name_conflicts(self, b1_store):
        course = b1_store.courses()[0]
        other = b1_store.create_course("Other", "Other B1", CefrLevel.B1, competency_ids=[])
        with pytest.raises(DuplicateShortName):
            b1_store.rename_course(other.id, "Other", course.short_name)


class TestAppendOnly:
    def test_random_operation_sequences_never_lose_assessments(self, b1_store):
        rng = random.Random(20130618)
        course = b1_store.courses()[0]
        for step in range(200):
            before = b1_store.assessments()
            op = rng.randrange(4)
            if op == 0:
                try:
                    b1_store.record_assessment(
                        rng.choice(WRITERS).id, rng.choice(course.competency_ids), rng.randint(1, 5)
                    )
                except StudentNotEnrolled:
                    pass  # randomly unenrolled earlier; the property still holds
            elif op == 1:
                b1_store.unenroll(course.id, rng.choice(WRITERS).id)
            elif op == 2:
                b1_store.enroll(course.id, rng.choice(WRITERS).id)
            else:
                b1_store.rename_course(course.id, f"renamed {step}", f"short {step}")
            after = b1_store.assessments()
            assert after[: len(before)] == before

    def test_unenrolled_students_can_still_be_assessed_via_other_course(self, b1_store):
        # membership is not data ownership: a second course still grants access
        course = b1_store.courses()[0]
        second = b1_store.create_course("Second B1", "B1 second", CefrLevel.B1, [MODALS_PAST])
        b1_store.enroll(second.id, "gm")
        b1_store.unenroll(course.id, "gm")
        b1_store.record_assessment("gm", MODALS_PAST, 5)
        assert b1_store.current_rating("gm", MODALS_PAST) == 5


class TestSnapshot:
    def test_snapshot_is_isolated_from_later_writes(self, b1_store):
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        snap = b1_store.snapshot()
        b1_store.record_assessment("gm", MODALS_PAST, 5)
        assert snap.current_rating("gm", MODALS_PAST) == 3
        assert b1_store.current_rating("gm", MODALS_PAST) == 5


class TestPersistence:
    def test_empty_store_round_trip(self, tmp_path):
        store = Store()
        path = tmp_path / "store.json"
        store.save(path)
        loaded = Store.load(path)
        assert store_state(loaded) == store_state(store)

    def test_populated_round_trip_is_deep_equal(self, tmp_path, taxonomy_store):
        make_golden_course(taxonomy_store, competency_ids=None)
        course = taxonomy_store.courses()[0]
        rng = random.Random(17)
        for _ in range(40):
            taxonomy_store.record_assessment(
                rng.choice(WRITERS).id,
                rng.choice(course.competency_ids),
                rng.randint(1, 5),
                feedback=rng.choice([None, "très bien", ""]),
                assessor=rng.choice(["rb", "import"]),
            )
        taxonomy_store.unenroll(course.id, "oe")
        path = tmp_path / "store.json"
        taxonomy_store.save(path)
        loaded = Store.load(path)
        assert store_state(loaded) == store_state(taxonomy_store)

    def test_timestamps_survive_bit_identical(self, tmp_path, b1_store):
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        path = tmp_path / "store.json"
        b1_store.save(path)
        loaded = Store.load(path)
        assert loaded.assessments()[0].timestamp == b1_store.assessments()[0].timestamp

    def test_truncated_file_is_corrupt(self, tmp_path, b1_store):
        path = tmp_path / "store.json"
        b1_store.save(path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptStore):
            Store.load(path)

    def test_checksum_tamper_detected(self, tmp_path, b1_store):
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        path = tmp_path / "store.json"
        b1_store.save(path)
        doc = json.loads(path.read_text())
        doc["assessments"][0]["score"] = 5
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptStore):
            Store.load(path)

    def test_wrong_format_version_rejected(self, tmp_path):
        store = Store()
        path = tmp_path / "store.json"
        store.save(path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        from cefrtrack.store import document_checksum

        doc["checksum"] = document_checksum(doc)
        path.write_text(json.dumps(doc))
        with pytest.raises(CorruptStore):
            Store.load(path)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(StoreIoError):
            Store.load(tmp_path / "absent.json")


class TestDossier:
    def test_history_ordered_by_timestamp_then_score(self, b1_store):
        b1_store.record_assessment("gm", MODALS_PAST, 3)
        b1_store.record_assessment("gm", SHOULD_HAVE, 4)
        b1_store.append_imported(
            Assessment(
                student_id="gm",
                competency_id=SHOULD_HAVE,
                score=2,
                feedback=None,
                assessor="import",
                timestamp=T0 - timedelta(days=365),
                source=SOURCE_IMPORT,
            )
        )
        dossier = b1_store.dossier("gm")
        assert dossier.student.id == "gm"
        stamps = [a.timestamp for a in dossier.history]
        assert stamps == sorted(stamps)
        assert len(dossier.history) == 3
