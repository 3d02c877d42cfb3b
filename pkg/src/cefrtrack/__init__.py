"""CEFR competency tracking: per-student skill records, gradebook reports,
gap analysis, and portable record archives."""

from .errors import TrackerError
from .model import (
    CefrLevel,
    Competency,
    CompetencyKind,
    PlacementTable,
    Rating,
    Student,
    format_rating,
    next_level,
    parse_level,
    place_student,
    score_label,
)
from .portability import (
    Archive,
    MergeInto,
    MergeSummary,
    NewCourse,
    Replace,
    export_archive,
    export_dossier,
    import_archive,
    import_outcomes_csv,
    merge_into,
    read_archive,
)
from .reports import (
    GapAnalysis,
    GraderReport,
    LevelChecklist,
    UserReport,
    export_report,
    gap_analysis,
    grader_report,
    level_checklist,
    rounded_average,
    user_report,
)
from .store import Assessment, Course, Dossier, Store

__version__ = "0.1.0"

__all__ = [
    "Archive",
    "Assessment",
    "CefrLevel",
    "Competency",
    "CompetencyKind",
    "Course",
    "Dossier",
    "GapAnalysis",
    "GraderReport",
    "LevelChecklist",
    "MergeInto",
    "MergeSummary",
    "NewCourse",
    "PlacementTable",
    "Rating",
    "Replace",
    "Store",
    "Student",
    "TrackerError",
    "UserReport",
    "export_archive",
    "export_dossier",
    "export_report",
    "format_rating",
    "gap_analysis",
    "grader_report",
    "import_archive",
    "import_outcomes_csv",
    "level_checklist",
    "merge_into",
    "next_level",
    "parse_level",
    "place_student",
    "read_archive",
    "rounded_average",
    "score_label",
    "user_report",
]
