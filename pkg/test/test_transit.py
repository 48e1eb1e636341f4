import math

import pytest

from holoflow.config import Window
from holoflow.equilibria import find_equilibria
from holoflow.errors import NotEscaping, OutOfSpan, PoleProximity
from holoflow.field_expr import parse
from holoflow.integrator import FORWARD, integrate, trace_orbit
from holoflow.transit import (CLOCK, CONTOUR, ProbePoint, clock_contour_check,
                              contour_integral_reciprocal, divergence_probe, residue_period,
                              transit_time_clock)


@pytest.fixture
def logistic_orbit():
    f = parse("x*(x-1)")
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, win)
    return f, trace_orbit(f, 0.5 + 0.5j, {}, eqs, win)


def test_clock_transit(logistic_orbit):
    _, tr = logistic_orbit
    r = transit_time_clock(tr, -1.0, 2.0)
    assert r.method == CLOCK
    assert r.value == 3.0
    with pytest.raises(OutOfSpan):
        transit_time_clock(tr, 0.0, tr.span[1] + 1.0)


def test_clock_matches_contour(logistic_orbit):
    f, tr = logistic_orbit
    assert clock_contour_check(f, tr, -1.5, 2.0) < 1e-7
    assert clock_contour_check(f, tr, 1.0, 1.0) == 0.0


def test_contour_integral_along_real_axis():
    f = parse("1+x^2")
    r = contour_integral_reciprocal(f, [-1 + 0j, 0j, 1 + 0j])
    assert r.method == CONTOUR
    assert abs(r.value - math.pi / 2) < 1e-10
    # explicit zeros skip the search
    r = contour_integral_reciprocal(f, [-1 + 0j, 1 + 0j], zeros=[1j, -1j])
    assert abs(r.value - math.pi / 2) < 1e-10


def test_contour_too_close_to_a_zero():
    f = parse("x*(x-1)")
    with pytest.raises(PoleProximity) as e:
        contour_integral_reciprocal(f, [-1 + 0j, 1e-6j, 0.4 + 1j], zeros=[0j, 1 + 0j])
    assert e.value.where == 0j


def test_residue_period():
    f = parse("1+x^2")
    assert abs(residue_period(f, 1j, 0.5) - math.pi) < 1e-10
    g = parse("i*x*(x-1)")
    assert abs(abs(residue_period(g, 0j, 0.25)) - 2 * math.pi) < 1e-10
    with pytest.raises(PoleProximity):
        residue_period(f, 1j, 3.0)


def test_divergence_probe_needs_a_slow_escape():
    f = parse("x^2")
    win = Window(-2, -2, 2, 2)
    tr = integrate(f, 1 + 0j, FORWARD, cfg={}, equilibria=find_equilibria(f, win), window=win)
    with pytest.raises(NotEscaping):
        divergence_probe(f, tr, [3.0, 4.0])
    with pytest.raises(NotEscaping):
        divergence_probe(f, tr, [3.0], direction="backward")


def test_divergence_probe_on_exponential_escape():
    f = parse("x")
    win = Window(-2, -2, 2, 2)
    tr = integrate(f, 1 + 0j, FORWARD, cfg={}, equilibria=find_equilibria(f, win), window=win)
    probe = divergence_probe(f, tr, [10.0, 100.0, 1000.0])
    # |z| = e^t, so reaching |z| = r costs ln r
    assert [p.threshold for p in probe] == [10.0, 100.0, 1000.0]
    assert all(abs(p.tau - math.log(p.threshold)) < 1e-6 for p in probe)
    assert all(p.margin is None for p in probe)


def test_probe_point_margin():
    assert ProbePoint(-3.0, 5.0, 2.0).margin == 3.0
    assert ProbePoint(-3.0, 5.0).as_dict()["margin"] is None
