# holoflow/transit.py
"""
Transit times: tau(a, b) = t2 - t1 on the flow clock, or the integral of 1/F
along any path homotopic to the orbit piece from a to b.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import Window, with_defaults
from .equilibria import find_zeros, zero_order
from .errors import HoloflowError, NotEscaping, OutOfSpan, PoleProximity
from .field_expr import FieldAst, parse, to_source
from .integrator import FateKind, OrbitTrace, hermite
from .quadrature import circle_integral, integrate, polyline_integral

CLOCK, CONTOUR = "clock", "contour"


def _noop(_evt):
    pass


@dataclass(frozen=True)
class TransitResult:
    value: complex
    method: str
    error_estimate: float
    path: Dict[str, Any] = field(default_factory=dict, compare=False)

    def as_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "method": self.method,
                "error_estimate": self.error_estimate, "path": dict(self.path)}


def _reciprocal(f: FieldAst):
    return lambda z: 1.0 / f.evaluate_array(z)


def _distance_to_polyline(p: np.ndarray, a: complex) -> float:
    if len(p) == 1:
        return abs(p[0] - a)
    s0, d = p[:-1], np.diff(p)
    dd = np.abs(d) ** 2
    with np.errstate(all="ignore"):
        s = np.where(dd > 0, ((a - s0) * np.conj(d)).real / dd, 0.0)
    return float(np.min(np.abs(s0 + np.clip(s, 0, 1) * d - a)))


def contour_integral_reciprocal(f: FieldAst, path: Sequence[complex], cfg: Optional[Dict] = None,
                                zeros: Optional[Sequence[complex]] = None,
                                window: Optional[Window] = None, logger: Callable = _noop) -> TransitResult:
    """
    Integral of 1/F along the polyline `path`.

    The path must keep pole_guard_rel * diameter away from every zero of F;
    `zeros` may be supplied, otherwise they are searched in a box around the path.
    """
    cfg = with_defaults(cfg)
    p = np.asarray(path, dtype=complex)
    box = Window(p.real.min() - 1e-9, p.imag.min() - 1e-9, p.real.max() + 1e-9, p.imag.max() + 1e-9)
    diameter = (window or box).diameter
    guard = cfg["pole_guard_rel"] * diameter
    if zeros is None and box.diameter < 1e4:
        try:
            pad = 0.25 * box.diameter
            zeros = find_zeros(f, Window(box.xmin - pad, box.ymin - pad, box.xmax + pad, box.ymax + pad), cfg)
        except HoloflowError as e:
            logger({"type": "warn", "op": "contour_integral_reciprocal", "msg": f"zero search failed: {e}"})
            zeros = []
    for a in zeros or []:
        if _distance_to_polyline(p, a) < guard:
            raise PoleProximity(f"path passes within {guard:.3g} of the zero {a!r}", a)
    q = polyline_integral(_reciprocal(f), p, cfg)
    if not (math.isfinite(q.value.real) and math.isfinite(q.value.imag)):
        raise PoleProximity("1/F is not finite along the path")
    if q.exhausted:
        logger({"type": "warn", "op": "contour_integral_reciprocal", "msg": "quadrature panel budget exhausted"})
    return TransitResult(q.value, CONTOUR, q.error,
                         {"kind": "polyline", "points": len(p), "start": complex(p[0]), "end": complex(p[-1])})


def transit_time_clock(trace: OrbitTrace, t1: float, t2: float) -> TransitResult:
    lo, hi = trace.span
    for t in (t1, t2):
        if not lo <= t <= hi:
            raise OutOfSpan(f"t = {t} outside the resolved span [{lo}, {hi}]")
    return TransitResult(complex(t2 - t1, 0.0), CLOCK, 0.0, {"kind": "trace", "t1": t1, "t2": t2})


def clock_contour_check(f: FieldAst, trace: OrbitTrace, t1: float, t2: float,
                        cfg: Optional[Dict] = None) -> float:
    """|integral of 1/F along the densified trace polyline over [t1, t2] - (t2 - t1)|."""
    clock = transit_time_clock(trace, t1, t2)
    if t1 == t2:
        return 0.0
    _, zz = trace.piece(min(t1, t2), max(t1, t2), per_step=2)
    contour = contour_integral_reciprocal(f, zz, cfg, zeros=[])
    value = contour.value if t2 >= t1 else -contour.value
    return abs(value - clock.value)


def residue_period(f: FieldAst, a: complex, radius: float, cfg: Optional[Dict] = None) -> complex:
    """Integral of 1/F over the circle |z - a| = radius, i.e. 2 pi i Res(1/F, a)."""
    cfg = with_defaults(cfg)
    fp = f.derivative(1)
    count = circle_integral(lambda z: fp.evaluate_array(z) / f.evaluate_array(z), a, radius, cfg)
    try:
        expected = zero_order(f, a, cfg)
    except HoloflowError:
        expected = 1
    n = (count.value / (2j * math.pi)).real
    if not math.isfinite(n) or int(round(n)) != expected:
        raise PoleProximity(f"disk of radius {radius} around {a!r} holds other zeros (count {n:.3f})", a)
    q = circle_integral(_reciprocal(f), a, radius, cfg)
    return q.value


# ---------- divergence probe ----------

def _xexp_comparator(y: float, cfg: Dict) -> float:
    """Lower bound for the transit time from Re = -1 to Re = y on x*exp(x)."""
    top = abs(y)
    if top <= 1:
        return -2 * math.e
    q = integrate(lambda u: np.exp(u) / u, np.linspace(1.0, top, 9), cfg)
    return q.value.real - 2 * math.e


# canonical source -> (comparator, coordinate, origin threshold)
COMPARATORS: Dict[str, Any] = {
    to_source(parse("x*exp(x)").root): (_xexp_comparator, "re", -1.0),
}


@dataclass(frozen=True)
class ProbePoint:
    threshold: float
    tau: float
    comparator: Optional[float] = None

    @property
    def margin(self) -> Optional[float]:
        return None if self.comparator is None else self.tau - self.comparator

    def as_dict(self) -> Dict[str, Any]:
        return {"threshold": self.threshold, "tau": self.tau,
                "comparator": self.comparator, "margin": self.margin}


def _coordinate(z, coordinate: str):
    return np.real(z) if coordinate == "re" else np.abs(z)


def _crossing_time(trace: OrbitTrace, level: float, coordinate: str, after: float, sign: float) -> Optional[float]:
    c = _coordinate(trace.z, coordinate)
    order = range(len(trace.t) - 1) if sign > 0 else range(len(trace.t) - 2, -1, -1)
    for k in order:
        t0, t1 = trace.t[k], trace.t[k + 1]
        if (sign > 0 and t1 < after) or (sign < 0 and t0 > after):
            continue
        if (c[k] - level) * (c[k + 1] - level) > 0:
            continue
        lo, hi = t0, t1
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            zm = hermite(t0, trace.z[k], trace.dz[k], t1, trace.z[k + 1], trace.dz[k + 1], mid)
            if (_coordinate(zm, coordinate) - level) * (c[k] - level) > 0:
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        if (sign > 0 and t >= after) or (sign < 0 and t <= after):
            return float(t)
    return None


def divergence_probe(f: FieldAst, trace: OrbitTrace, checkpoints: Sequence[float],
                     coordinate: Optional[str] = None, direction: str = "forward",
                     cfg: Optional[Dict] = None) -> List[ProbePoint]:
    """
    Cumulative clock time at each checkpoint along an orbit escaping without blow-up.

    For fields with a registered comparator the times are measured from the
    comparator's origin crossing and paired with the comparator value.
    """
    cfg = with_defaults(cfg)
    fate = trace.forward_fate if direction == "forward" else trace.backward_fate
    if fate is None or fate.kind != FateKind.UNDETERMINED or fate.reason != "unbounded-slow":
        got = "not integrated" if fate is None else f"{fate.kind.value}({fate.reason or ''})"
        raise NotEscaping(f"{direction} fate is {got}, not Undetermined(unbounded-slow)")
    sign = 1.0 if direction == "forward" else -1.0
    entry = COMPARATORS.get(to_source(f.root))
    if coordinate is None:
        coordinate = entry[1] if entry else "abs"
    origin_t = 0.0
    comparator = None
    if entry is not None and entry[1] == coordinate:
        comparator = entry[0]
        t0 = _crossing_time(trace, entry[2], coordinate, trace.span[0] if sign > 0 else trace.span[1], sign)
        if t0 is not None:
            origin_t = t0
    out = []
    for level in checkpoints:
        t = _crossing_time(trace, level, coordinate, origin_t, sign)
        if t is None:
            break
        out.append(ProbePoint(float(level), abs(t - origin_t),
                              comparator(level, cfg) if comparator else None))
    return out
