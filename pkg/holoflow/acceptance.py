# holoflow/acceptance.py
"""
The `verify` corpus: worked examples with closed-form or published answers.

Each item returns Check rows; `run_corpus` runs a selection and
`format_table` prints them as a pass/fail table.
"""
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import Window, with_defaults
from .equilibria import EquilibriumClass, find_equilibria, sector_directions
from .errors import ConfigError, HoloflowError
from .field_expr import negate, parse, substitute
from .integrator import FORWARD, find_crossing, integrate, trace_orbit
from .quadrature import rectangle_integral
from .separatrix import (DOUBLE, IN_SECTOR, NEGATIVE, POSITIVE, analyze,
                         analyze_equilibrium, compute_basin, configuration_summary,
                         heteroclinic_region_probe)
from .transit import clock_contour_check, divergence_probe, residue_period

QUARTIC = "x^2*(x-1)*(x-i)*(x-1-i)"
XEXP = "x*exp(x)"
F_ALPHA = "exp(i*A)*(x-1)^2*(x+1)^2"
CENTER_LINE = "i*x*(x-1)"
TAN_FLOW = "1+x^2"
SQUARE = "x^2"
LOGISTIC = "x*(x-1)"

ALPHAS = (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)

_SWAP = {
    EquilibriumClass.STABLE_NODE: EquilibriumClass.UNSTABLE_NODE,
    EquilibriumClass.UNSTABLE_NODE: EquilibriumClass.STABLE_NODE,
    EquilibriumClass.STABLE_FOCUS: EquilibriumClass.UNSTABLE_FOCUS,
    EquilibriumClass.UNSTABLE_FOCUS: EquilibriumClass.STABLE_FOCUS,
    EquilibriumClass.CENTER: EquilibriumClass.CENTER,
    EquilibriumClass.MULTIPLE: EquilibriumClass.MULTIPLE,
}
_SIDE_SWAP = {POSITIVE: NEGATIVE, NEGATIVE: POSITIVE, DOUBLE: DOUBLE}


def _noop(_evt):
    pass


@dataclass
class Check:
    item: int
    name: str
    passed: bool
    measured: Any = None
    expected: Any = None

    def as_dict(self) -> Dict[str, Any]:
        return {"item": self.item, "name": self.name, "pass": self.passed,
                "measured": self.measured, "expected": self.expected}


def _eq_at(equilibria, z, tol=1e-6):
    for e in equilibria:
        if abs(e.location - z) <= tol:
            return e
    raise HoloflowError(f"no equilibrium found near {z!r}")


# ---------- items ----------

def quartic_equilibria(cfg: Dict, res, logger) -> List[Check]:
    f = parse(QUARTIC)
    eqs = find_equilibria(f, Window(-1, -1, 2, 2), cfg, logger)
    want = {0j: EquilibriumClass.MULTIPLE, 1 + 0j: EquilibriumClass.STABLE_FOCUS,
            1j: EquilibriumClass.STABLE_FOCUS, 1 + 1j: EquilibriumClass.STABLE_NODE}
    err = max(min(abs(e.location - z) for e in eqs) for z in want)
    out = [Check(1, "quartic zeros {0,1,i,1+i}", len(eqs) == 4 and err <= 1e-9, err, 1e-9)]
    classes = {z: _eq_at(eqs, z).eq_class for z in want}
    out.append(Check(1, "quartic classes", classes == want,
                     [c.value for c in classes.values()], [c.value for c in want.values()]))
    zero = _eq_at(eqs, 0j)
    out.append(Check(1, "two sectors at 0", zero.order == 2 and len(zero.sector_directions or ()) == 2,
                     zero.order, 2))
    probe = heteroclinic_region_probe(f, zero, _eq_at(eqs, 1 + 1j), Window(-1, -1, 2, 2), res, cfg, eqs, logger)
    out.append(Check(1, "heteroclinic probe (0, 1+i) measured", not probe.verdicts,
                     [r.side for r in probe.records], "sides recorded, no verdicts"))
    return out


def xexp_counterexample(cfg: Dict, res, logger) -> List[Check]:
    f = parse(XEXP)
    window = Window(-6, -6, 6, 6)
    eqs = find_equilibria(f, window, cfg, logger)
    a = _eq_at(eqs, 0j)
    out = [Check(2, "0 is an unstable node", a.eq_class == EquilibriumClass.UNSTABLE_NODE, a.eq_class.value,
                 EquilibriumClass.UNSTABLE_NODE.value)]
    report = analyze_equilibrium(f, a, window, res, cfg, eqs, logger)[0]
    seps = report.separatrices
    out.append(Check(2, "boundary orbits negative",
                     len(seps) >= 2 and all(r.side == NEGATIVE for r in seps),
                     [r.side for r in seps], NEGATIVE))
    finite = [r.orbit.backward_fate.t_star for r in seps if r.orbit.backward_fate.is_blow_up]
    out.append(Check(2, "finite backward blow-up", len(finite) == len(seps) and all(math.isfinite(t) for t in finite),
                     finite, "finite"))
    slow = [r for r in seps if r.orbit.forward_fate.reason == "unbounded-slow"]
    out.append(Check(2, "forward unbounded-slow", len(slow) == len(seps),
                     [r.orbit.forward_fate.kind.value for r in seps], "Undetermined(unbounded-slow)"))
    margins = []
    for r in slow:
        probe = divergence_probe(f, r.orbit, [-3.0, -4.0, -5.0], cfg=cfg)
        margins.extend(p.margin for p in probe)
    out.append(Check(2, "divergence probe margins positive",
                     len(margins) == 3 * len(slow) and bool(margins) and min(margins) > 0, margins, "> 0"))
    return out


def f_alpha_sweep(cfg: Dict, res, logger) -> List[Check]:
    window = Window(-3, -3, 3, 3)
    out = []
    for alpha in ALPHAS:
        f = parse(substitute(F_ALPHA, "A", alpha))
        reports = analyze(f, window, res, cfg, logger=logger)
        s = configuration_summary(reports)
        if abs(alpha - math.pi / 2) < 1e-12:
            doubles = [r for rep in reports for r in rep.records if r.side == DOUBLE]
            near_i = min((r.orbit.distance_to(1j) for r in doubles), default=math.inf)
            out.append(Check(3, "alpha=pi/2 double-sided through i", near_i <= 1e-3, near_i, 1e-3))
            out.append(Check(3, "alpha=pi/2 separatrix count", s["separatrices"] == 5 and s["blow_ups"] == 6,
                             [s["separatrices"], s["blow_ups"]], [5, 6]))
        else:
            out.append(Check(3, f"alpha={alpha:.4f} six one-sided",
                             s["one_sided"] == 6 and s["positive"] == 3 and s["negative"] == 3,
                             [s["positive"], s["negative"], s["double"]], [3, 3, 0]))
    return out


def center_equality(cfg: Dict, res, logger) -> List[Check]:
    f = parse(CENTER_LINE)
    window = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, window, cfg, logger)
    a = _eq_at(eqs, 0j)
    report = analyze_equilibrium(f, a, window, res, cfg, eqs, logger)[0]
    doubles = [r for r in report.records if r.side == DOUBLE]
    tau = doubles[0].transit_time if len(doubles) == 1 else math.nan
    off = max((abs(r.seed.real - 0.5) for r in report.records), default=math.inf)
    return [
        Check(4, "boundary on Re = 1/2", off <= 1e-5, off, 1e-5),
        Check(4, "single double-sided, tau = 2pi", len(report.records) == 1 and abs(tau - 2 * math.pi) <= 1e-3,
              tau, 2 * math.pi),
        Check(4, "center verdicts pass", report.passed, [v.measured for v in report.verdicts], "pass"),
    ]


def tan_flow_center(cfg: Dict, res, logger) -> List[Check]:
    f = parse(TAN_FLOW)
    window = Window(-3, -0.5, 3, 3)
    eqs = find_equilibria(f, window, cfg, logger)
    a = _eq_at(eqs, 1j)
    residue = abs(residue_period(f, a.location, 0.5, cfg))
    out = [Check(5, "T(i) = pi, derivative vs residue", abs(a.period - math.pi) <= 1e-9
                 and abs(residue - a.period) <= 1e-9, [a.period, residue], math.pi)]
    report = analyze_equilibrium(f, a, window, res, cfg, eqs, logger)[0]
    doubles = [r for r in report.records if r.side == DOUBLE]
    tau = doubles[0].transit_time if doubles else math.nan
    out.append(Check(5, "real axis double-sided, tau = pi",
                     len(doubles) == 1 and abs(tau - math.pi) <= 1e-3 and abs(doubles[0].seed.imag) <= 1e-5,
                     tau, math.pi))
    tr = integrate(f, 0j, FORWARD, cfg=cfg, equilibria=eqs, window=window, logger=logger)
    out.append(Check(5, "blow-up from 0 at pi/2", abs(tr.t_plus - math.pi / 2) <= 1e-6, tr.t_plus, math.pi / 2))
    return out


def square_sectors(cfg: Dict, res, logger) -> List[Check]:
    f = parse(SQUARE)
    window = Window(-2, -2, 2, 2)
    dirs = sector_directions(f, 0j, 2, cfg)
    err = max(abs(dirs[0]), abs(dirs[1] - math.pi))
    out = [Check(6, "directions {0, pi}", err <= 1e-9, list(dirs), [0.0, math.pi])]
    eqs = find_equilibria(f, window, cfg, logger)
    tr = integrate(f, 1 + 0j, FORWARD, cfg=cfg, equilibria=eqs, window=window, logger=logger)
    out.append(Check(6, "blow-up from 1 at t = 1", abs(tr.t_plus - 1.0) <= 1e-6, tr.t_plus, 1.0))
    grid = compute_basin(f, eqs[0], window, res, cfg, eqs, logger=logger)
    pts = grid.points()
    upper = grid.sector[(grid.labels == IN_SECTOR) & (pts.imag > 0)]
    lower = grid.sector[(grid.labels == IN_SECTOR) & (pts.imag < 0)]
    filled = float((grid.labels == IN_SECTOR).mean())
    out.append(Check(6, "half-planes homoclinic, distinct indices",
                     filled > 0.8 and len(set(upper.tolist())) == 1 and len(set(lower.tolist())) == 1
                     and set(upper.tolist()) != set(lower.tolist()), filled, "> 0.8"))
    reports = analyze_equilibrium(f, eqs[0], window, res, cfg, eqs, logger)
    shapes = [(len(r.records), [x.side for x in r.gamma1()], [x.side for x in r.gamma2()]) for r in reports]
    ok = len(reports) == 2 and all(n == 2 and g1 == [POSITIVE] and g2 == [NEGATIVE] for n, g1, g2 in shapes)
    out.append(Check(6, "each sector bounded by {a, G1, G2}", ok, shapes, "2 records, G1 positive, G2 negative"))
    probe = heteroclinic_region_probe(f, eqs[0], None, window, res, cfg, eqs, logger)
    out.append(Check(6, "no heteroclinic region", probe.empty_boundary and not probe.records,
                     len(probe.records), 0))
    return out


def logistic_node(cfg: Dict, res, logger) -> List[Check]:
    f = parse(LOGISTIC)
    window = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, window, cfg, logger)
    a, one = _eq_at(eqs, 0j), _eq_at(eqs, 1 + 0j)
    report = analyze_equilibrium(f, a, window, res, cfg, eqs, logger)[0]
    tags = [(c.theorem_tag, c.attached_equilibria) for c in report.components]
    out = [Check(7, "one component (B) with equilibrium 1", tags == [("(B)", (one.id,))], tags, [("(B)", (one.id,))])]
    tr = integrate(f, 2 + 0j, FORWARD, cfg=cfg, equilibria=eqs, window=window, logger=logger)
    out.append(Check(7, "forward time from 2 = ln 2", abs(tr.t_plus - math.log(2)) <= 1e-6, tr.t_plus, math.log(2)))
    out.append(Check(7, "(1, oo) positive", [r.side for r in report.separatrices] == [POSITIVE],
                     [r.side for r in report.separatrices], [POSITIVE]))
    return out


_CORPUS_ZEROS = {
    QUARTIC: [0j, 1 + 0j, 1j, 1 + 1j],
    XEXP: [0j],
    CENTER_LINE: [0j, 1 + 0j],
    TAN_FLOW: [1j, -1j],
    SQUARE: [0j],
    LOGISTIC: [0j, 1 + 0j],
}


def clock_contour_property(cfg: Dict, res, logger, pieces: int = 200, rects: int = 100) -> List[Check]:
    rng = np.random.default_rng(20240601)
    worst = 0.0
    fields = list(_CORPUS_ZEROS)
    done = 0
    while done < pieces:
        src = fields[done % len(fields)]
        f, zeros = parse(src), _CORPUS_ZEROS[src]
        z0 = complex(rng.uniform(-2, 2), rng.uniform(-2, 2))
        if min(abs(z0 - z) for z in zeros) < 0.2:
            continue
        try:
            tr = trace_orbit(f, z0, cfg, window=Window(-3, -3, 3, 3), budget={"max_steps": 4000})
        except HoloflowError:
            continue
        ok = (np.abs(tr.z) <= 10) & (np.min(np.abs(tr.z[:, None] - np.asarray(zeros)[None, :]), axis=1) > 0.05)
        ts = tr.t[ok]
        if len(ts) < 2:
            continue
        t1, t2 = np.sort(rng.choice(ts, 2, replace=False))
        _, piece_z = tr.piece(t1, t2)
        if np.any(np.abs(piece_z) > 10):
            continue
        worst = max(worst, clock_contour_check(f, tr, float(t1), float(t2), cfg))
        done += 1
    out = [Check(8, f"clock vs contour over {pieces} pieces", worst <= 1e-6, worst, 1e-6)]
    worst_cauchy = 0.0
    done = 0
    while done < rects:
        src = fields[done % len(fields)]
        f, zeros = parse(src), _CORPUS_ZEROS[src]
        x0, y0 = rng.uniform(-2, 2, 2)
        w, h = rng.uniform(0.1, 1.0, 2)
        win = Window(x0, y0, x0 + w, y0 + h)
        if any(win.dilate(0.2).contains(z) for z in zeros):
            continue
        q = rectangle_integral(lambda z: 1.0 / f.evaluate_array(z), win, cfg)
        worst_cauchy = max(worst_cauchy, abs(q.value))
        done += 1
    out.append(Check(8, f"Cauchy null-homotopy over {rects} rectangles", worst_cauchy <= 1e-8, worst_cauchy, 1e-8))
    return out


def boundary_continuity(cfg: Dict, res, logger) -> List[Check]:
    """tau(x', y') -> tau(x, y) as x' = x - 2^-k approaches the boundary line Re = 1/2."""
    f = parse(CENTER_LINE)
    window = Window(-2, -2, 3, 2)
    eqs = find_equilibria(f, window, cfg, logger)
    x, segment = 0.5 + 1j, (0.25 + 0j, 0.75 + 0j)
    exact = 2 * math.atan(2.0)
    gaps = []
    for k in range(3, 11):
        d = 2.0 ** -k
        tr = integrate(f, x - d, FORWARD, budget={"t_end": 2 * exact}, cfg=cfg, equilibria=eqs, window=window)
        hit = find_crossing(f, tr, segment, cfg)
        gaps.append(abs(hit[0] - exact) if hit else math.inf)
    bumps = sum(1 for a, b in zip(gaps, gaps[1:]) if b > a)
    return [Check(9, "transit discrepancy at 2^-10", gaps[-1] < 1e-3, gaps[-1], 1e-3),
            Check(9, "discrepancy non-increasing", bumps <= 1, gaps, "<= 1 increase")]


_REVERSAL_WINDOWS = {
    QUARTIC: Window(-1, -1, 2, 2),
    XEXP: Window(-6, -6, 6, 6),
    substitute(F_ALPHA, "A", math.pi / 4): Window(-3, -3, 3, 3),
    CENTER_LINE: Window(-2, -2, 3, 2),
    TAN_FLOW: Window(-3, -0.5, 3, 3),
    SQUARE: Window(-2, -2, 2, 2),
    LOGISTIC: Window(-2, -2, 3, 2),
}


def _curve_samples(rec, window: Window, zeros: np.ndarray, n: int) -> np.ndarray:
    _, z = rec.orbit.dense(8)
    keep = (z.real >= window.xmin) & (z.real <= window.xmax) & (z.imag >= window.ymin) & (z.imag <= window.ymax)
    if zeros.size:
        keep &= np.min(np.abs(z[:, None] - zeros[None, :]), axis=1) > 1e-3
    z = z[keep]
    if len(z) > n:
        z = z[np.linspace(0, len(z) - 1, n).astype(int)]
    return z


def orbit_gap(a, b, window: Window, zeros: Sequence[complex] = (), n: int = 400) -> float:
    """Symmetric Hausdorff distance between two orbits, sampled inside the window away from equilibria."""
    zeros = np.asarray(zeros, dtype=complex)
    pa, pb = _curve_samples(a, window, zeros, n), _curve_samples(b, window, zeros, n)
    if not len(pa) or not len(pb):
        return math.inf
    return float(max(b.orbit.distances_to(pa, 32).max(), a.orbit.distances_to(pb, 32).max()))


def time_reversal(cfg: Dict, res, logger, fields: Sequence[str] = tuple(_REVERSAL_WINDOWS)) -> List[Check]:
    out = []
    for src in fields:
        f, g = parse(src), negate(parse(src))
        win = _REVERSAL_WINDOWS[src]
        ef, eg = find_equilibria(f, win, cfg, logger), find_equilibria(g, win, cfg, logger)
        swapped = len(ef) == len(eg) and all(_SWAP[a.eq_class] == _eq_at(eg, a.location).eq_class for a in ef)
        reps_f, reps_g = analyze(f, win, res, cfg, ef, logger), analyze(g, win, res, cfg, eg, logger)
        rf = [r for rep in reps_f for r in rep.separatrices]
        rg = [r for rep in reps_g for r in rep.separatrices]
        zeros = [e.location for e in ef]
        matched, worst = 0, 0.0
        for r in rf:
            if not rg:
                worst = math.inf
                break
            twin = min(rg, key=lambda s: s.orbit.distance_to(r.seed))
            gap = orbit_gap(r, twin, win, zeros)
            worst = max(worst, gap)
            if gap <= 1e-4 and twin.side == _SIDE_SWAP[r.side]:
                matched += 1
        out.append(Check(10, f"-F swaps classes and sides ({src})",
                         swapped and matched == len(rf) == len(rg) and len(rf) > 0,
                         [matched, len(rf), len(rg), worst], "all, gap <= 1e-4"))
        types_f = sorted(c.type for rep in reps_f for c in rep.components)
        types_g = sorted(c.type for rep in reps_g for c in rep.components)
        out.append(Check(10, f"-F keeps component types ({src})", types_f == types_g, types_f, types_g))
    return out


ITEMS: Dict[int, Callable[..., List[Check]]] = {
    1: quartic_equilibria,
    2: xexp_counterexample,
    3: f_alpha_sweep,
    4: center_equality,
    5: tan_flow_center,
    6: square_sectors,
    7: logistic_node,
    8: clock_contour_property,
    9: boundary_continuity,
    10: time_reversal,
}


def run_corpus(items: Optional[Iterable[int]] = None, cfg: Optional[Dict] = None,
               resolution=(48, 48), logger: Callable = _noop) -> List[Check]:
    """Run the selected items; an item that raises becomes one failed check."""
    cfg = with_defaults(cfg)
    unknown = sorted(set(items or ()) - set(ITEMS))
    if unknown:
        raise ConfigError(f"unknown verify items {unknown}; known 1..{len(ITEMS)}")
    out: List[Check] = []
    for n in sorted(items or ITEMS):
        fn = ITEMS[n]
        t0 = time.time()
        try:
            checks = fn(cfg, tuple(resolution), logger)
        except HoloflowError as e:
            checks = [Check(n, fn.__name__, False, f"{type(e).__name__}: {e}", "no error")]
        out.extend(checks)
        logger({"type": "info", "op": "verify", "msg": f"item {n} done", "item": n,
                "seconds": round(time.time() - t0, 2), "passed": all(c.passed for c in checks)})
    return out


def format_table(checks: Sequence[Check]) -> str:
    rows = [("item", "check", "result", "measured")]
    for c in checks:
        m = c.measured
        if isinstance(m, float):
            m = "%.6g" % m
        rows.append((str(c.item), c.name, "PASS" if c.passed else "FAIL", str(m)[:60]))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = ["  ".join(col.ljust(w) for col, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    passed = sum(1 for c in checks if c.passed)
    lines.append(f"{passed}/{len(checks)} checks passed")
    return "\n".join(lines)
