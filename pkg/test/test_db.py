import io
import json

import pytest

from holoflow import db as ledger
from holoflow.telemetry import EventLog, make_logger


@pytest.fixture
def con(tmp_path):
    c = ledger.open_db(str(tmp_path / "ledger.db"))
    yield c
    c.close()


def _run(con):
    return ledger.insert_run(con, {"subcommand": "separatrices", "field_source": "x*(x-1)",
                                   "window": "-2,-2,3,2", "resolution": "64,64"})


def test_schema_is_created(con):
    names = {r[0] for r in con.execute("SELECT name FROM sqlite_master WHERE type='table'")}
    assert {"runs", "equilibria", "separatrices", "verdicts", "system_events"} <= names


def test_run_summary(con):
    run_id = _run(con)
    for i, (re, cls) in enumerate([(0.0, "StableNode"), (1.0, "UnstableNode")]):
        ledger.insert_equilibrium(con, {"run_id": run_id, "eq_id": i, "re": re, "im": 0.0,
                                        "eq_order": 1, "eq_class": cls})
    for side in ("positive", "double", "double"):
        ledger.insert_separatrix(con, {"run_id": run_id, "report_index": 0, "record_id": 0, "equilibrium": 0,
                                       "region_kind": "NodeFocusBasin", "side": side,
                                       "seed_re": 2.0, "seed_im": 0.0})
    ledger.insert_verdict(con, {"run_id": run_id, "name": "node_one_sided_blow_up", "passed": 1})
    ledger.insert_verdict(con, {"run_id": run_id, "name": "node_side_matches_stability", "passed": 0})
    ledger.finish_run(con, run_id, 3, {"separatrices": 3})

    s = ledger.get_run_summary(con, run_id)
    assert s["exit_code"] == 3
    assert s["equilibria"] == 2
    assert s["sides"] == {"double": 2, "positive": 1}
    assert (s["verdicts_passed"], s["verdicts_failed"]) == (1, 1)
    assert s["duration_ms"] is not None and s["duration_ms"] >= 0
    (summary,) = con.execute("SELECT summary FROM runs WHERE id=?", (run_id,)).fetchone()
    assert json.loads(summary) == {"separatrices": 3}


def test_missing_run(con):
    assert ledger.get_run_summary(con, 999) is None


def test_recent_runs_newest_first(con):
    ids = [_run(con) for _ in range(3)]
    rows = ledger.get_recent_runs(con, limit=2)
    assert [r[0] for r in rows] == ids[::-1][:2]


def test_event_log_writes_warnings(con):
    run_id = _run(con)
    out = io.StringIO()
    log = EventLog(con=con, run_id=run_id, stream=out)
    log({"op": "integrate", "msg": "step underflow", "z": 1 + 1j})
    log({"op": "grid", "msg": "cells done", "type": "info"})
    # info stays off the console unless verbose
    lines = [json.loads(l) for l in out.getvalue().splitlines()]
    assert len(lines) == 1 and lines[0]["op"] == "integrate"
    assert lines[0]["z"] == {"re": 1.0, "im": 1.0}
    assert len(log.warnings()) == 1 and len(log.events) == 2
    assert ledger.get_run_summary(con, run_id)["warnings"] == 1
    (details,) = con.execute("SELECT details FROM system_events WHERE event_type='integrate'").fetchone()
    assert json.loads(details) == {"z": {"re": 1.0, "im": 1.0}}


def test_make_logger_respects_telemetry_db(con):
    log = make_logger({"telemetry_db": False, "telemetry_console": False}, con=con, run_id=1)
    assert log.con is None and not log.console
    log = make_logger({"telemetry_db": True}, con=con, run_id=1, verbose=True)
    assert log.con is con and log.min_console == "info"
