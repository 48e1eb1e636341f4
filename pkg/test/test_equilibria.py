import math

import numpy as np
import pytest

from holoflow.config import Window
from holoflow.equilibria import (EquilibriumClass, _newton, classify, find_equilibria, find_zeros,
                                 find_zeros_with_order, gap, period, sector_directions, zero_order)
from holoflow.errors import ConfigError, NonConvergence, NotACenter, NotMultiple, OrderOverflow
from holoflow.field_expr import parse

QUARTIC = "x^2*(x-1)*(x-i)*(x-1-i)"


def _at(eqs, z):
    (e,) = [e for e in eqs if abs(e.location - z) < 1e-8]
    return e


def test_logistic_nodes():
    eqs = find_equilibria(parse("x*(x-1)"), Window(-2, -2, 3, 2))
    assert [e.id for e in eqs] == [0, 1]
    assert abs(eqs[0].location) < 1e-12 and abs(eqs[1].location - 1) < 1e-12
    assert eqs[0].eq_class == EquilibriumClass.STABLE_NODE and eqs[0].stable is True
    assert eqs[1].eq_class == EquilibriumClass.UNSTABLE_NODE and eqs[1].stable is False
    assert eqs[0].period is None


def test_centers_and_periods():
    eqs = find_equilibria(parse("i*x*(x-1)"), Window(-2, -2, 3, 2))
    assert all(e.is_center for e in eqs)
    assert all(abs(e.period - 2 * math.pi) < 1e-12 for e in eqs)
    f = parse("1+x^2")
    assert abs(period(f, 1j) - math.pi) < 1e-12
    with pytest.raises(NotACenter):
        period(parse("x*(x-1)"), 0j)


def test_quartic_zeros_and_classes():
    eqs = find_equilibria(parse(QUARTIC), Window(-1, -1, 2, 2))
    assert len(eqs) == 4
    assert _at(eqs, 0j).eq_class == EquilibriumClass.MULTIPLE
    assert _at(eqs, 0j).order == 2
    assert _at(eqs, 1).eq_class == EquilibriumClass.STABLE_FOCUS
    assert _at(eqs, 1j).eq_class == EquilibriumClass.STABLE_FOCUS
    assert _at(eqs, 1 + 1j).eq_class == EquilibriumClass.STABLE_NODE
    # ids follow (re, im) order
    assert [e.location for e in eqs] == sorted((e.location for e in eqs), key=lambda z: (z.real, z.imag))


def test_transcendental_field_zeros():
    zs = find_zeros(parse("x*exp(x)"), Window(-3, -3, 3, 3))
    assert len(zs) == 1 and abs(zs[0]) < 1e-12
    pairs = find_zeros_with_order(parse("sin(x)"), Window(-4, -1, 4, 1))
    assert [round(z.real / math.pi) for z, _ in pairs] == [-1, 0, 1]
    assert all(m == 1 for _, m in pairs)


def test_multiplicity_from_derivatives():
    pairs = find_zeros_with_order(parse("(x-1)^2*(x+1)^2"), Window(-3, -3, 3, 3))
    assert [m for _, m in pairs] == [2, 2]
    assert zero_order(parse("x^3"), 0j) == 3
    with pytest.raises(OrderOverflow):
        zero_order(parse("x^3"), 0j, {"max_order": 2})
    with pytest.raises(NonConvergence):
        zero_order(parse("x"), 1 + 0j)


def test_sector_directions():
    assert sector_directions(parse("x^2"), 0j) == [0.0, math.pi]
    dirs = sector_directions(parse("x^3"), 0j)
    assert len(dirs) == 4
    assert all(abs(a - b) < 1e-12 for a, b in zip(dirs, [0, math.pi / 2, math.pi, 3 * math.pi / 2]))
    with pytest.raises(NotMultiple):
        sector_directions(parse("x*(x-1)"), 0j)


def test_direction_orientation():
    e = classify(parse("x^2"), 0j)
    assert e.eq_class == EquilibriumClass.MULTIPLE
    # x' = x^2 pushes the positive real axis outward and pulls the negative one in
    assert e.outgoing() == (True, False)
    assert e.model_coefficient == 1


def test_focus_classification():
    e = classify(parse("(-1+i)*x"), 0j)
    assert e.eq_class == EquilibriumClass.STABLE_FOCUS
    e = classify(parse("(1+i)*x"), 0j)
    assert e.eq_class == EquilibriumClass.UNSTABLE_FOCUS


def test_constant_fields():
    with pytest.raises(ConfigError):
        find_zeros(parse("0"), Window(-1, -1, 1, 1))
    assert find_equilibria(parse("1+0*i"), Window(-1, -1, 1, 1)) == []


def test_gap_and_as_dict():
    win = Window(-2, -2, 3, 2)
    eqs = find_equilibria(parse("x*(x-1)"), win)
    assert abs(gap(eqs[0], eqs, win) - 1) < 1e-12
    assert gap(eqs[0], eqs[:1], win) == win.diameter
    d = eqs[0].as_dict()
    assert d["class"] == "StableNode"
    assert set(d) >= {"id", "location", "order", "class", "period", "sector_directions"}


def test_newton_stops_on_overflowing_derivative():
    g = parse("exp(x)")
    assert _newton(g, g, 800 + 0j, {"newton_max_iter": 20}) == 800 + 0j


@pytest.mark.parametrize("scale, swaps", [("2", False), ("-1", True)])
def test_scaling_keeps_classes_and_periods(scale, swaps):
    win = Window(-2, -2, 3, 2)
    base = find_equilibria(parse("x*(x-1)"), win)
    scaled = find_equilibria(parse(f"({scale})*x*(x-1)"), win)
    flip = {EquilibriumClass.STABLE_NODE: EquilibriumClass.UNSTABLE_NODE,
            EquilibriumClass.UNSTABLE_NODE: EquilibriumClass.STABLE_NODE}
    for a, b in zip(base, scaled):
        assert abs(a.location - b.location) < 1e-12
        assert b.eq_class == (flip[a.eq_class] if swaps else a.eq_class)
    k = abs(float(scale))
    centers = find_equilibria(parse("i*x*(x-1)"), win)
    scaled_centers = find_equilibria(parse(f"({scale})*i*x*(x-1)"), win)
    for a, b in zip(centers, scaled_centers):
        assert b.is_center
        assert abs(b.period - a.period / k) < 1e-12


@pytest.mark.slow
def test_argument_principle_on_random_polynomials():
    rng = np.random.default_rng(2024)
    win = Window(-1.5, -1.5, 1.5, 1.5)
    done = 0
    while done < 100:
        deg = int(rng.integers(1, 7))
        roots = np.round(rng.uniform(-1, 1, deg), 3) + 1j * np.round(rng.uniform(-1, 1, deg), 3)
        if deg > 1 and min(abs(a - b) for i, a in enumerate(roots) for b in roots[i + 1:]) < 0.1:
            continue
        src = "*".join(f"(x-({r.real:.3f}+({r.imag:.3f})*i))" for r in roots)
        found = find_zeros(parse(src), win)
        assert len(found) == deg, src
        assert max(min(abs(z - r) for z in found) for r in roots) < 1e-8, src
        done += 1
