import json

import pytest

from cctforge.corpus import CommitRecord, parse_commit_record

GSHEETS_DIFF = (
    "--- a/superset/db_engine_specs/gsheets.py\n"
    "+++ b/superset/db_engine_specs/gsheets.py\n"
    "@@ -10,2 +10,2 @@\n"
    ' engine = "gsheets"\n'
    "-allows_subqueries = False\n"
    "+allows_subqueries = True\n"
)
GSHEETS_MESSAGE = "Enable subqueries in gsheetsdb"


def gsheets_line(**overrides) -> str:
    obj = {
        "id": "c1",
        "project": "superset",
        "language": "Python",
        "message": GSHEETS_MESSAGE,
        "diff": GSHEETS_DIFF,
        "timestamp": 1600000000,
        "labels": {
            "defective": False,
            "quality": True,
            "old_comment": "Whether subqueries are allowed",
            "new_comment": "Subqueries are allowed",
            "review": "Was this tested against gsheetsdb?",
        },
    }
    obj.update(overrides)
    return json.dumps(obj)


@pytest.fixture
def gsheets() -> CommitRecord:
    return parse_commit_record(gsheets_line(), 1)


def make_record(rid: str, diff: str, message: str = "change the value of things", **kw) -> CommitRecord:
    kw.setdefault("project", "p")
    kw.setdefault("language", "Python")
    return CommitRecord(id=rid, message=message, diff_text=diff, **kw)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
