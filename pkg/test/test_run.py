import json
import math
import sqlite3

import pandas as pd
import pytest

from holoflow import db as ledger
from holoflow.run import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, _Run, build_parser, config_from_args, main, run


@pytest.fixture(autouse=True)
def no_env_ledger(monkeypatch):
    monkeypatch.delenv("HOLOFLOW_DB", raising=False)


def test_equilibria_json_and_csv(tmp_path, capsys):
    out, csv = tmp_path / "eq.json", tmp_path / "eq.csv"
    code = main(["equilibria", "x*(x-1)", "--window", "-2,-2,3,2", "--json", str(out), "--csv", str(csv)])
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert [e["class"] for e in doc["equilibria"]] == ["StableNode", "UnstableNode"]
    assert doc["window"] == [-2, -2, 3, 2]
    assert len(pd.read_csv(csv)) == 2
    assert "2 equilibria" in capsys.readouterr().out


def test_default_window_surrounds_the_equilibria(tmp_path):
    out = tmp_path / "eq.json"
    assert main(["equilibria", "x*(x-1)", "--json", str(out)]) == EXIT_OK
    xmin, ymin, xmax, ymax = json.loads(out.read_text())["window"]
    assert xmin < 0 and xmax > 1 and ymin < 0 < ymax


def test_usage_errors(capsys):
    assert main(["equilibria", "x*("]) == EXIT_USAGE
    assert "FieldSyntaxError" in capsys.readouterr().err
    assert main(["equilibria", "x+y"]) == EXIT_USAGE
    assert main(["nonsense", "x"]) == EXIT_USAGE
    assert main(["orbit", "x^2"]) == EXIT_USAGE
    assert main(["verify", "--items", "1,x"]) == EXIT_USAGE
    assert main(["verify", "--items", "42"]) == EXIT_USAGE
    assert main(["equilibria", "x", "--window", "1,1,0,0"]) == EXIT_USAGE


def test_run_returns_codes_instead_of_raising(capsys):
    rc = config_from_args(build_parser().parse_args(["equilibria", "x*("]))
    assert run(rc) == EXIT_USAGE
    assert "FieldSyntaxError" in capsys.readouterr().err


def test_raw_overflow_maps_to_numerical_exit(monkeypatch, capsys):
    def boom(self):
        raise OverflowError("math range error")
    monkeypatch.setattr(_Run, "equilibria", boom)
    rc = config_from_args(build_parser().parse_args(["equilibria", "x"]))
    assert run(rc) == EXIT_NUMERICAL
    assert "NumericalOverflow" in capsys.readouterr().err


def test_orbit_reports_blow_up(tmp_path, capsys):
    out = tmp_path / "orbit.json"
    code = main(["orbit", "x^2", "--from", "1", "--window", "-2,-2,2,2", "--json", str(out)])
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert abs(doc["t_plus"] - 1.0) < 1e-6
    assert doc["forward_fate"]["kind"] == "BlowUp"
    assert "forward: BlowUp" in capsys.readouterr().out


def test_transit_matches_closed_form(tmp_path):
    out = tmp_path / "transit.json"
    code = main(["transit", "1+x^2", "--from", "0", "--time", "0.5", "--window", "-3,-0.5,3,3",
                 "--json", str(out)])
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert abs(doc["end"]["re"] - math.tan(0.5)) < 1e-8
    assert doc["contour_residual"] < 1e-7


def test_config_file_with_flag_overrides(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"field": "x^2", "window": [-1, -1, 1, 1], "resolution": [24, 24],
                               "tolerances": {"rtol": 1e-8}}))
    args = build_parser().parse_args(["separatrices", "--config", str(cfg), "--rtol", "1e-9",
                                      "--pair", "0,1", "--strict"])
    rc = config_from_args(args)
    assert rc.field_source == "x^2" and rc.resolution == (24, 24)
    assert rc.tolerances["rtol"] == 1e-9
    assert rc.options["pair"] == [0, 1] and rc.options["res_given"]
    assert rc.strict
    assert rc.options["config_path"].endswith("c.json")


def test_ledger_rows(tmp_path):
    path = str(tmp_path / "ledger.db")
    assert main(["equilibria", "x*(x-1)", "--window", "-2,-2,3,2", "--db", path]) == EXIT_OK
    assert main(["equilibria", "x*(", "--db", path]) == EXIT_USAGE
    con = sqlite3.connect(path)
    rows = ledger.get_recent_runs(con)
    assert [r[3] for r in rows] == [EXIT_USAGE, EXIT_OK]
    s = ledger.get_run_summary(con, rows[1][0])
    assert s["equilibria"] == 2 and s["subcommand"] == "equilibria"
    (n_err,) = con.execute("SELECT COUNT(*) FROM system_events WHERE severity='error'").fetchone()
    assert n_err == 1
    con.close()


@pytest.mark.slow
def test_separatrices_logistic(tmp_path):
    out, svg = tmp_path / "sep.json", tmp_path / "sep.svg"
    code = main(["separatrices", "x*(x-1)", "--window", "-2,-2,3,2", "--res", "32,32", "--strict",
                 "--json", str(out), "--svg", str(svg)])
    assert code == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["summary"]["positive"] == 1 and doc["summary"]["double"] == 0
    assert 'id="separatrices"' in svg.read_text()
