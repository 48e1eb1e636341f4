import math
from dataclasses import replace

import numpy as np
import pytest

from holoflow.config import Window
from holoflow.equilibria import Equilibrium, EquilibriumClass, find_equilibria
from holoflow.errors import ConfigError, EmptyBoundary, MalformedComponent, SectorSeedFailure
from holoflow.field_expr import parse
from holoflow.integrator import FORWARD, Fate, FateKind, OrbitTrace, integrate
from holoflow.separatrix import (DOUBLE, EQUILIBRIUM, IN_BASIN, IN_SECTOR, NEGATIVE, NONE, OUTSIDE, POSITIVE,
                                 UNDETERMINED, ConfigurationReport, RegionKind, SeparatrixRecord,
                                 analyze_equilibrium, assemble_components, classify_side,
                                 compute_basin, configuration_summary, distinct_separatrices,
                                 extract_boundary, heteroclinic_region_probe, sector_pair,
                                 trace_and_classify, verify_theorems)

RES = (32, 32)
BLOW = Fate(FateKind.BLOW_UP, t_star=1.0)


def _orbit(z, forward, backward):
    z = np.asarray(z, dtype=complex)
    t = np.arange(len(z), dtype=float) - len(z) // 2
    return OrbitTrace(t, z, np.gradient(z, t), forward_fate=forward, backward_fate=backward)


def _record(i, side, z=(0j, 1 + 0j), attached=(), transit=None, forward=None, backward=None):
    fw = forward or Fate(FateKind.BLOW_UP, t_star=1.0)
    bw = backward or Fate(FateKind.BLOW_UP, t_star=-1.0)
    return SeparatrixRecord(i, complex(z[0]), _orbit(z, fw, bw), side, transit, None, None, attached)


def _eq(z, cls, eq_id=0, period=None):
    return Equilibrium(complex(z), 1, cls, -1 + 0j, -1 + 0j, period=period, id=eq_id)


# ---------- sides ----------

def test_classify_side():
    conv = Fate(FateKind.CONVERGES_TO, equilibrium=0)
    slow = Fate(FateKind.UNDETERMINED, reason="unbounded-slow")
    assert classify_side(_orbit([0j, 1j], Fate(FateKind.BLOW_UP, t_star=2.0),
                                Fate(FateKind.BLOW_UP, t_star=-1.5))) == (DOUBLE, 3.5, None)
    assert classify_side(_orbit([0j, 1j], BLOW, conv))[0] == POSITIVE
    assert classify_side(_orbit([0j, 1j], conv, Fate(FateKind.BLOW_UP, t_star=-1.0)))[0] == NEGATIVE
    assert classify_side(_orbit([0j, 1j], conv, conv))[0] == NONE
    assert classify_side(_orbit([0j, 1j], slow, conv)) == (UNDETERMINED, None, "unbounded-slow")


# ---------- components ----------

def test_component_types_and_node_tags():
    recs = [
        _record(0, POSITIVE, attached=(1,)),
        _record(1, DOUBLE),
        _record(2, NEGATIVE, attached=(2,)),
        _record(3, NEGATIVE, attached=(2,)),
    ]
    comps = assemble_components(recs, [1, 2, 3], RegionKind.NODE_FOCUS_BASIN)
    got = {(c.orbit_ids, c.attached_equilibria): (c.type, c.theorem_tag) for c in comps}
    assert got[((0,), (1,))] == ("(iii)", "(B)")
    assert got[((1,), ())] == ("(i)", "(A)")
    assert got[((2, 3), (2,))] == ("(iv)", "(C)")
    assert got[((), (3,))] == ("(ii)", None)


def test_component_tags_only_for_node_basins():
    comps = assemble_components([_record(0, DOUBLE)], [], RegionKind.CENTER_BASIN)
    assert [(c.type, c.theorem_tag) for c in comps] == [("(i)", None)]


def test_three_orbits_on_one_equilibrium_is_malformed():
    recs = [_record(i, NEGATIVE, attached=(5,)) for i in range(3)]
    with pytest.raises(MalformedComponent):
        assemble_components(recs, [5])


# ---------- verdicts ----------

def test_center_verdicts():
    a = _eq(0j, EquilibriumClass.CENTER, period=2 * math.pi)
    win = Window(-2, -2, 3, 2)
    good = ConfigurationReport("i*x*(x-1)", win, a, RegionKind.CENTER_BASIN,
                               [_record(0, DOUBLE, transit=2 * math.pi)], [])
    good.verdicts = verify_theorems(good)
    assert good.passed
    assert {v.name for v in good.verdicts} == {"center_all_double_sided", "center_transit_budget"}
    bad = ConfigurationReport("i*x*(x-1)", win, a, RegionKind.CENTER_BASIN,
                              [_record(0, DOUBLE, transit=2 * math.pi), _record(1, DOUBLE, transit=1.0)], [])
    bad.verdicts = verify_theorems(bad)
    assert not bad.passed
    assert [v.name for v in bad.verdicts if not v.passed] == ["center_transit_budget"]


def test_node_verdicts():
    a = _eq(0j, EquilibriumClass.STABLE_NODE)
    win = Window(-2, -2, 3, 2)
    rep = ConfigurationReport("x*(x-1)", win, a, RegionKind.NODE_FOCUS_BASIN, [_record(0, NEGATIVE)], [])
    verdicts = {v.name: v.passed for v in verify_theorems(rep)}
    assert verdicts == {"node_side_matches_stability": False, "node_one_sided_blow_up": True}


def test_node_with_double_sided_separatrix_fails_one_sided_check():
    a = _eq(0j, EquilibriumClass.STABLE_NODE)
    win = Window(-2, -2, 3, 2)
    recs = [_record(0, POSITIVE), _record(1, DOUBLE, z=(1j, 2j), transit=1.0)]
    rep = ConfigurationReport("x*(x-1)", win, a, RegionKind.NODE_FOCUS_BASIN, recs, [])
    verdict = {v.name: v for v in verify_theorems(rep)}["node_one_sided_blow_up"]
    assert not verdict.passed
    assert (verdict.measured, verdict.bound) == (1, 2)


def test_summary_counts_double_sided_twice():
    a = _eq(0j, EquilibriumClass.STABLE_NODE)
    win = Window(-3, -3, 3, 3)
    recs = [_record(0, POSITIVE, z=(2 + 0j, 3 + 0j)), _record(1, NEGATIVE, z=(-2 + 0j, -3 + 0j)),
            _record(2, DOUBLE, z=(1j, 2j), transit=1.0), _record(3, NONE, z=(-1j, -2j))]
    r1 = ConfigurationReport("f", win, a, RegionKind.NODE_FOCUS_BASIN, recs, [])
    # the same orbit seen again from a second report is counted once
    r2 = ConfigurationReport("f", win, a, RegionKind.NODE_FOCUS_BASIN, [_record(0, DOUBLE, z=(1.5j, 2j))], [])
    assert len(distinct_separatrices([r1, r2])) == 3
    s = configuration_summary([r1, r2])
    assert (s["positive"], s["negative"], s["double"]) == (1, 1, 1)
    assert s["separatrices"] == 3 and s["one_sided"] == 2 and s["blow_ups"] == 4
    assert s["double_sided"][0]["transit_time"] == 1.0


def test_record_distance_closes_converging_ends():
    conv = Fate(FateKind.CONVERGES_TO, equilibrium=7)
    r = _record(0, POSITIVE, z=(0.5 + 0j, 2 + 0j), attached=(7,), backward=conv)
    assert r.leaves(7) and not r.enters(7)
    assert r.orbit.distance_to(0.1 + 0j) > 0.3
    assert r.distance_to(0.1 + 0j, {7: 0j}) < 1e-12


# ---------- grids ----------

@pytest.fixture(scope="module")
def logistic():
    f = parse("x*(x-1)")
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, win)
    return f, win, eqs, compute_basin(f, eqs[0], win, RES, {}, eqs)


def test_logistic_basin_fills_the_window(logistic):
    f, win, eqs, grid = logistic
    assert grid.region_kind == RegionKind.NODE_FOCUS_BASIN
    assert grid.labels.shape == (32, 32)
    assert set(grid.eq_cells) == {0, 1}
    iy, ix = grid.eq_cells[1]
    assert grid.labels[iy, ix] == EQUILIBRIUM
    assert grid.region_mask().mean() > 0.95
    assert grid.counts()["InBasin"] == int((grid.labels == IN_BASIN).sum())


def test_logistic_slit_gives_cut_seeds(logistic):
    f, win, eqs, grid = logistic
    seeds = extract_boundary(grid)
    assert seeds.cut_pairs > 0
    assert 1 in seeds.on_boundary
    on_slit = [s for s in seeds if abs(s.imag) < 1e-6 and s.real > 0.9]
    assert len(on_slit) >= seeds.cut_pairs // 2


def test_extract_boundary_empty_region(logistic):
    f, win, eqs, grid = logistic
    with pytest.raises(EmptyBoundary):
        extract_boundary(replace(grid, labels=np.zeros_like(grid.labels)))


def test_compute_basin_rejects_outside_equilibrium():
    f = parse("x*(x-1)")
    eqs = find_equilibria(f, Window(-2, -2, 3, 2))
    with pytest.raises(ConfigError):
        compute_basin(f, eqs[1], Window(-2, -2, 0.5, 2), RES, {}, eqs)


def test_trace_and_classify_merges_duplicate_seeds():
    f = parse("1+x^2")
    win = Window(-3, -0.5, 3, 3)
    eqs = find_equilibria(f, win)
    recs = trace_and_classify(f, [0j, 0.5 + 0j, 1j], eqs, win, {})
    # 0 and 0.5 lie on the same real-axis orbit; i is an equilibrium
    assert len(recs) == 1
    assert recs[0].side == DOUBLE
    assert abs(recs[0].transit_time - math.pi) < 1e-6


def test_square_grid_has_two_sectors():
    f = parse("x^2")
    win = Window(-2, -2, 2, 2)
    eqs = find_equilibria(f, win)
    grid = compute_basin(f, eqs[0], win, RES, {}, eqs)
    assert grid.region_kind == RegionKind.ELLIPTIC_SECTOR
    pts = grid.points()
    upper = set(grid.sector[(grid.labels == IN_SECTOR) & (pts.imag > 0)].tolist())
    lower = set(grid.sector[(grid.labels == IN_SECTOR) & (pts.imag < 0)].tolist())
    assert len(upper) == 1 and len(lower) == 1 and upper != lower


def test_no_heteroclinic_partner_gives_empty_report():
    f = parse("x^2")
    win = Window(-2, -2, 2, 2)
    eqs = find_equilibria(f, win)
    rep = heteroclinic_region_probe(f, eqs[0], None, win, RES, {}, eqs)
    assert rep.empty_boundary and rep.records == [] and rep.verdicts == []
    assert rep.as_dict()["region_kind"] == "HeteroclinicRegion"


def test_sector_pair_needs_a_multiple_equilibrium():
    f = parse("x*(x-1)")
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, win)
    with pytest.raises(SectorSeedFailure):
        sector_pair(f, eqs[0], win, {}, eqs)


# ---------- full pipeline ----------

@pytest.mark.slow
def test_logistic_node_report(logistic):
    f, win, eqs, _ = logistic
    (rep,) = analyze_equilibrium(f, eqs[0], win, RES, {}, eqs)
    assert [r.side for r in rep.separatrices] == [POSITIVE]
    assert [(c.theorem_tag, c.attached_equilibria) for c in rep.components] == [("(B)", (1,))]
    assert rep.passed
    doc = rep.as_dict()
    assert doc["region_kind"] == "NodeFocusBasin"
    assert [v["name"] for v in doc["theorem_verdicts"]] == ["node_side_matches_stability",
                                                            "node_one_sided_blow_up"]


@pytest.mark.slow
def test_center_basin_report():
    f = parse("i*x*(x-1)")
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, win)
    (rep,) = analyze_equilibrium(f, eqs[0], win, RES, {}, eqs)
    assert rep.region_kind == RegionKind.CENTER_BASIN
    assert len(rep.records) == 1
    (r,) = rep.records
    assert r.side == DOUBLE
    assert abs(r.seed.real - 0.5) < 1e-5
    assert abs(r.transit_time - 2 * math.pi) < 1e-3
    assert rep.passed


@pytest.mark.slow
def test_square_sector_pairs():
    f = parse("x^2")
    win = Window(-2, -2, 2, 2)
    eqs = find_equilibria(f, win)
    pairs = sector_pair(f, eqs[0], win, {}, eqs)
    assert [p.sector for p in pairs] == [0, 1]
    for p in pairs:
        assert p.gamma1.side == POSITIVE and p.gamma2.side == NEGATIVE
        assert p.gamma1.leaves(eqs[0].id) and p.gamma2.enters(eqs[0].id)
    reports = analyze_equilibrium(f, eqs[0], win, RES, {}, eqs)
    assert len(reports) == 2
    assert all(rep.passed for rep in reports)
    assert configuration_summary(reports)["separatrices"] == 2


@pytest.mark.slow
@pytest.mark.parametrize("src, t", [("x*(x-1)", 0.5), ("i*x*(x-1)", 1.0)])
def test_labels_are_invariant_along_the_flow(src, t):
    f = parse(src)
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, win)
    grid = compute_basin(f, eqs[0], win, RES, {}, eqs)
    pts = grid.points().ravel()
    labels = grid.labels.ravel()
    near = np.min(np.abs(pts[:, None] - np.array([e.location for e in eqs])[None, :]), axis=1)
    chosen = np.nonzero((near > 0.1) & (near < 0.4) & np.isin(labels, [IN_BASIN, OUTSIDE]))[0][:20]
    assert len(chosen) > 5
    moved = []
    for i in chosen:
        tr = integrate(f, complex(pts[i]), FORWARD, {"t_end": t}, {}, eqs, win)
        moved.append(complex(tr.z[-1]))
    again, _, _ = grid.classifier(np.array(moved))
    assert again.tolist() == labels[chosen].tolist()
