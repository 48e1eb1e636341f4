import json
import math

import numpy as np
import pandas as pd

from holoflow.config import Window
from holoflow.equilibria import EquilibriumClass, find_equilibria
from holoflow.field_expr import parse
from holoflow.integrator import trace_orbit
from holoflow.render import render_svg
from holoflow.report import (atomic_write, document, dumps, equilibria_frame, to_jsonable,
                             write_csv, write_json, write_orbit_csv)


def test_to_jsonable_complex_and_nonfinite():
    out = to_jsonable({"z": 1 + 2j, "inf": math.inf, "nan": float("nan"), "arr": np.array([1.5, 2.5]),
                       "kind": EquilibriumClass.CENTER, "ids": {2, 1}})
    assert out == {"z": {"re": 1.0, "im": 2.0}, "inf": None, "nan": None, "arr": [1.5, 2.5],
                   "kind": "Center", "ids": [1, 2]}


def test_dumps_keeps_full_precision_and_order():
    text = dumps({"b": 0.1, "a": [1, 2.0], "c": None, "d": True})
    assert json.loads(text) == {"b": 0.1, "a": [1, 2.0], "c": None, "d": True}
    assert "0.10000000000000001" in text
    assert text.index('"b"') < text.index('"a"')
    assert text.endswith("}\n")


def test_atomic_write_creates_parents(tmp_path):
    p = atomic_write(tmp_path / "a" / "b" / "out.txt", "hello\n")
    assert p.read_text() == "hello\n"
    atomic_write(p, "again\n")
    assert p.read_text() == "again\n"
    assert [q.name for q in p.parent.iterdir()] == ["out.txt"]


def test_write_json_and_document(tmp_path):
    doc = document("x^2", Window(-1, -1, 1, 1), [], {"separatrices": 0})
    p = write_json(tmp_path / "r.json", doc)
    back = json.loads(p.read_text())
    assert back["window"] == [-1, -1, 1, 1]
    assert back["reports"] == [] and back["summary"] == {"separatrices": 0}


def test_csv_outputs(tmp_path):
    win = Window(-2, -2, 3, 2)
    f = parse("x*(x-1)")
    eqs = find_equilibria(f, win)
    p = write_csv(tmp_path / "eq.csv", equilibria_frame(eqs))
    df = pd.read_csv(p)
    assert list(df.columns) == ["id", "re", "im", "order", "class", "period", "sector_directions"]
    assert list(df["class"]) == ["StableNode", "UnstableNode"]
    assert "\r" not in p.read_text()

    tr = trace_orbit(f, 0.5 + 0.5j, {}, eqs, win)
    df = pd.read_csv(write_orbit_csv(tmp_path / "orbit.csv", tr))
    assert list(df.columns) == ["t", "re", "im"]
    assert len(df) == len(tr.t)
    assert df["t"].is_monotonic_increasing


def test_render_svg_layers_and_determinism():
    win = Window(-2, -2, 2, 2)
    f = parse("x^2")
    eqs = find_equilibria(f, win)
    tr = trace_orbit(f, 1j, {}, eqs, win)
    a = render_svg([], [], eqs, window=win, orbits=[tr])
    b = render_svg([], [], eqs, window=win, orbits=[tr])
    assert a == b
    assert a.startswith('<?xml version="1.0" encoding="UTF-8"?>')
    for layer in ('id="fill"', 'id="orbits"', 'id="equilibria"', 'id="directions"'):
        assert layer in a
    assert 'id="separatrices"' not in a
    assert a.count('class="ray outgoing"') == 1 and a.count('class="ray incoming"') == 1
    assert 'class="equilibrium Multiple"' in a
