import json
import os

import pytest

from holoflow.config import DEFAULTS, RunConfig, Window, load_config, run_config_from_dict, with_defaults, worker_count
from holoflow.errors import ConfigError


def test_window_parse():
    w = Window.parse("-2,-2,3,2")
    assert w.as_tuple() == (-2, -2, 3, 2)
    assert (w.width, w.height) == (5, 4)
    assert w.center == 0.5 + 0j
    assert w.contains(1 + 1j) and not w.contains(4 + 0j)
    assert w.corners()[0] == -2 - 2j
    for bad in ("1,2,3", "a,b,c,d", "1,1,0,2"):
        with pytest.raises(ConfigError):
            Window.parse(bad)


def test_window_around_and_dilate():
    w = Window.around([0j, 1 + 0j])
    assert w.center == 0.5 + 0j and w.width == 4.0
    assert Window.around([]).as_tuple() == (-1, -1, 1, 1)
    d = Window(0, 0, 2, 2).dilate(0.5)
    assert d.as_tuple() == (-0.5, -0.5, 2.5, 2.5)


def test_with_defaults_flattens_tolerances():
    cfg = with_defaults({"tolerances": {"rtol": 1e-6}, "max_steps": 10})
    assert cfg["rtol"] == 1e-6 and cfg["max_steps"] == 10
    assert cfg["grid_escape_radius"] == DEFAULTS["grid_escape_radius"]
    assert "tolerances" not in cfg


def test_worker_count(monkeypatch):
    assert worker_count({"workers": 3}) == 3
    monkeypatch.setenv("HOLOFLOW_THREADS", "2")
    assert worker_count({}) == 2
    assert worker_count({"workers": 0}) == 1


def test_validate():
    RunConfig("x^2", "orbit").validate()
    RunConfig("", "verify").validate()
    for rc in (RunConfig("x^2", "bogus"), RunConfig(" ", "orbit"),
               RunConfig("x^2", "portrait", resolution=(8, 64)), RunConfig("A*x", "sweep")):
        with pytest.raises(ConfigError):
            rc.validate()


def test_load_config(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"field": "x*(x-1)", "subcommand": "separatrices", "window": [-2, -2, 3, 2],
                             "resolution": [32, 32], "tolerances": {"rtol": 1e-8},
                             "params": {"A": [1, 2]}, "json": "out.json", "strict": True}))
    cfg = load_config(str(p))
    assert cfg["__path"] == os.path.abspath(str(p))
    rc = run_config_from_dict(cfg)
    assert rc.window == Window(-2, -2, 3, 2)
    assert rc.resolution == (32, 32)
    assert rc.params == {"A": [1.0, 2.0]}
    assert rc.outputs["json"] == "out.json" and rc.outputs["svg"] is None
    assert rc.strict and rc.settings()["rtol"] == 1e-8


def test_load_config_needs_field(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"subcommand": "orbit"}))
    with pytest.raises(ConfigError):
        load_config(str(p))
    p.write_text(json.dumps({"subcommand": "verify"}))
    assert load_config(str(p))["subcommand"] == "verify"
