"""Shared fixtures: the bundled taxonomy, the five-writer roster from the
grader figures, and randomized store builders for the property suites."""

from __future__ import annotations

import csv
import io
import random
from datetime import datetime, timedelta, timezone
from importlib import resources

import pytest

from cefrtrack.model import CefrLevel, Student
from cefrtrack.portability import import_outcomes_csv
from cefrtrack.store import Store


def bundled_outcomes_csv() -> bytes:
    return resources.files("cefrtrack.data").joinpath("cefr_outcomes.csv").read_bytes()


def bundled_outcomes_rows() -> list[dict]:
    """The fixture parsed independently of the importer, for count oracles."""
    text = bundled_outcomes_csv().decode("utf-8")
    return list(csv.DictReader(io.StringIO(text)))


def store_state(store: Store) -> dict:
    """Structural deep-equality oracle: every observable field, independent of
    the save/load code path under test."""
    return {
        "taxonomy": [
            (c.id, c.level.value, c.kind.value, c.title, c.description, store.custom_scope(c.id))
            for c in store.competencies()
        ],
        "students": [(s.id, s.surname, s.first_name, s.email) for s in store.students()],
        "courses": [
            (c.id, c.full_name, c.short_name, c.level.value, c.competency_ids, frozenset(c.roster))
            for c in store.courses()
        ],
        "assessments": [
            (a.student_id, a.competency_id, a.score, a.feedback, a.assessor, a.timestamp, a.source)
            for a in store.assessments()
        ],
    }


class Ticker:
    """Injectable store clock: strictly increasing, millisecond steps."""

    def __init__(self, start: datetime | None = None, step_ms: int = 1):
        self.current = start or datetime(2013, 6, 18, 0, 17, 0, tzinfo=timezone.utc)
        self.step = timedelta(milliseconds=step_ms)

    def __call__(self) -> datetime:
        value = self.current
        self.current = self.current + self.step
        return value


# The five writers of the paper's example roster.
WRITERS = [
    Student(id="gm", surname="Garcia-Marquez", first_name="Gabriel", email="gabriel@example.com"),
    Student(id="goswami", surname="Goswami", first_name="Amar", email="amar@example.com"),
    Student(id="rilke", surname="Rilke", first_name="Rainer Maria", email="rainer@example.com"),
    Student(id="oe", surname="Oe", first_name="Kenzaburo", email="kenzaburo@example.com"),
    Student(id="sembene", surname="Sembène", first_name="Ousmane", email="ousmane@example.com"),
]

# User-report figure: the 17 grade items of the B1 course, in figure order,
# with Garcia-Marquez's grades (None = the hyphen).
USER_REPORT_GOLDEN = [
    ("b1-should-have-might-have-etc", "B1 Should have, might have/etc.", 4),
    ("b1-modals-past", "B1 Modals: Past", 3),
    ("b1-need-to", "B1 Need to", 4),
    ("b1-must-have-to-ought-to", "B1 Must/have to/Ought to", 4),
    ("b1-intensifiers-range-3", "B1 Intensifiers range 3", 3),
    ("b1-must-can-t-deduction", "B1 Must/can't (deduction)", 4),
    ("b1-might-may-will-probably", "B1 Might, may, will, probably", 4),
    ("b1-modals-possibility", "B1 Modals: Possibility", 5),
    ("b1-reported-speech-range-of-tenses", "B1 Reported speech (range of tenses)", 4),
    ("b1-simple-passive", "B1 Simple passive", 4),
    ("b1-passives", "B1 Passives", 2),
    ("b1-extended-phrasal-verbs", "B1 Extended phrasal verbs", 5),
    (
        "b1-adverbial-phrases-of-time-place-and-frequency-including-word-order-adjectives-vs-adverbs",
        "B1 Adverbial phrases of time, place and frequency including word order Adjectives vs adverbs",
        3,
    ),
    ("b1-second-and-third-conditional", "B1 Second and third conditional", 4),
    ("b1-adverbial-phrases-of-degree-extent-probability", "B1 Adverbial phrases of degree/extent, probability", 4),
    ("b1-comparative-and-superlative-form-of-adverbs", "B1 Comparative and superlative form of adverbs", None),
    ("b1-present-perfect-continuous", "B1 Present perfect continuous", None),
]

SHOULD_HAVE = "b1-should-have-might-have-etc"
CONNECTING_WORDS = "b1-connecting-words-expressing-cause-and-effect"


@pytest.fixture
def ticker() -> Ticker:
    return Ticker()


@pytest.fixture
def store(ticker) -> Store:
    """Empty store with a deterministic clock."""
    return Store(clock=ticker)


@pytest.fixture
def taxonomy_store(store) -> Store:
    """Store preloaded with the bundled six-level taxonomy."""
    import_outcomes_csv(store, bundled_outcomes_csv(), scope="standard")
    return store


def make_golden_course(store: Store, competency_ids: list[str], enroll_all: bool = True):
    """The five-writer B1 gradebook used by the figure reproductions."""
    course = store.create_course(
        full_name="CEFR B1 Grammar Competencies",
        short_name="CEFR B1 Comp",
        level=CefrLevel.B1,
        competency_ids=competency_ids,
    )
    for student in WRITERS:
        store.add_student(student)
        if enroll_all:
            store.enroll(course.id, student.id)
    return course


def seed_column(store: Store, competency_id: str, ratings: list[int | None]) -> None:
    """Record one grader column: WRITERS[i] gets ratings[i] (None = skip)."""
    for student, rating in zip(WRITERS, ratings):
        if rating is not None:
            store.record_assessment(student.id, competency_id, rating)


def build_random_course_store(
    rng: random.Random,
    max_students: int = 10,
    max_competencies: int = 40,
    max_assessments: int = 200,
) -> tuple[Store, str]:
    """A randomized store with one populated course, for the property suites."""
    clock = Ticker(start=datetime(2020, 1, 1, tzinfo=timezone.utc), step_ms=rng.choice([1, 7, 250]))
    store = Store(clock=clock)
    level = rng.choice(list(CefrLevel))
    n_comp = rng.randint(1, max_competencies)
    comp_ids = []
    for i in range(n_comp):
        cid = f"{level.value.lower()}-skill-{i}"
        comp_ids.append(cid)
        from cefrtrack.model import Competency, CompetencyKind

        store.add_competency(
            Competency(
                id=cid,
                level=level,
                kind=rng.choice([CompetencyKind.GRAMMAR, CompetencyKind.FUNCTION]),
                title=f"{level.value} Skill {i}",
                description="",
            )
        )
    course = store.create_course(
        full_name=f"CEFR {level.value} Grammar Competencies",
        short_name=f"CEFR {level.value} Comp",
        level=level,
        competency_ids=comp_ids,
    )
    n_students = rng.randint(0, max_students)
    surnames = ["Garcia-Marquez", "Goswami", "Rilke", "Oe", "Sembène", "Achebe", "Allende", "Murakami"]
    firsts = ["Gabriel", "Amar", "Rainer", "Kenzaburo", "Ousmane", "Chinua", "Isabel", "Haruki"]
    for i in range(n_students):
        student = Student(
            id=f"s{i}",
            surname=rng.choice(surnames),
            first_name=rng.choice(firsts),
            email=f"s{i}@example.com",
        )
        store.add_student(student)
        store.enroll(course.id, student.id)
    if n_students:
        for _ in range(rng.randint(0, max_assessments)):
            store.record_assessment(
                f"s{rng.randrange(n_students)}",
                rng.choice(comp_ids),
                rng.randint(1, 5),
                feedback=rng.choice([None, "keep going", "see unit 4", ""]),
                assessor=rng.choice(["rb", "import-desk", "t.okafor"]),
            )
    return store, course.id
