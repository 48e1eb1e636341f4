# holoflow/equilibria.py
"""
Zeros of F inside a window and their classification.

Simple zeros are classified by lambda = F'(a): center (purely imaginary),
node (real) or focus; zeros of order m >= 2 carry the 2m-2 definite
directions that separate their global elliptic sectors.
"""
import cmath
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Window, with_defaults
from .errors import (ConfigError, NonConvergence, NotACenter, NotMultiple,
                     OrderOverflow, PoleProximity, WindingMismatch)
from .field_expr import FieldAst, derivatives
from .quadrature import rectangle_integral

TWO_PI = 2 * math.pi


def _noop(_evt):
    pass


class EquilibriumClass(str, Enum):
    CENTER = "Center"
    STABLE_NODE = "StableNode"
    UNSTABLE_NODE = "UnstableNode"
    STABLE_FOCUS = "StableFocus"
    UNSTABLE_FOCUS = "UnstableFocus"
    MULTIPLE = "Multiple"


@dataclass(frozen=True)
class Equilibrium:
    location: complex
    order: int
    eq_class: EquilibriumClass
    derivative_at: complex                 # F'(a)
    leading_coefficient: complex           # F^(m)(a)
    period: Optional[float] = None
    sector_directions: Optional[Tuple[float, ...]] = None
    near_degenerate: bool = False
    id: int = -1

    @property
    def is_multiple(self) -> bool:
        return self.order >= 2

    @property
    def is_center(self) -> bool:
        return self.eq_class == EquilibriumClass.CENTER

    @property
    def stable(self) -> Optional[bool]:
        """True/False for nodes and foci, None otherwise."""
        if self.eq_class in (EquilibriumClass.STABLE_NODE, EquilibriumClass.STABLE_FOCUS):
            return True
        if self.eq_class in (EquilibriumClass.UNSTABLE_NODE, EquilibriumClass.UNSTABLE_FOCUS):
            return False
        return None

    @property
    def model_coefficient(self) -> complex:
        """c of the local model w' = c w^m."""
        return self.leading_coefficient / math.factorial(self.order)

    def outgoing(self) -> Tuple[bool, ...]:
        """Orientation of each sorted definite direction (True: orbits leave a along it)."""
        if not self.sector_directions:
            return ()
        return tuple(_direction_outgoing(th, self.model_coefficient, self.order)
                     for th in self.sector_directions)

    def as_dict(self) -> Dict:
        return {
            "id": self.id,
            "location": self.location,
            "order": self.order,
            "class": self.eq_class.value,
            "period": self.period,
            "sector_directions": list(self.sector_directions) if self.sector_directions else None,
            "derivative_at": self.derivative_at,
            "leading_coefficient": self.leading_coefficient,
            "near_degenerate": self.near_degenerate,
        }


# ---------- tolerances ----------

def _boundary_points(window: Window, n: int = 128) -> np.ndarray:
    c = window.corners()
    s = np.arange(n) / n
    return np.concatenate([a + (b - a) * s for a, b in zip(c, c[1:] + c[:1])])


def window_scale(f: FieldAst, window: Window) -> float:
    """max |F| on the window boundary (finite samples only, at least 1e-300)."""
    v = np.abs(f.evaluate_array(_boundary_points(window)))
    v = v[np.isfinite(v)]
    return float(v.max()) if v.size else 1.0


def local_scale(f: FieldAst, a: complex, radius: float = 1.0) -> float:
    pts = a + radius * np.exp(1j * np.linspace(0, TWO_PI, 64, endpoint=False))
    v = np.abs(f.evaluate_array(pts))
    v = v[np.isfinite(v)]
    return max(1.0, float(v.max()) if v.size else 1.0)


def zero_tol(scale: float, cfg: Dict) -> float:
    return cfg["zero_tol_rel"] * (1.0 + scale)


def deriv_tol(k: int, scale: float, cfg: Dict) -> float:
    return cfg["deriv_tol_rel"] * math.factorial(k) * scale


# ---------- order / classification ----------

def zero_order(f: FieldAst, a: complex, cfg: Optional[Dict] = None) -> int:
    """Smallest k with |F^(k)(a)| > deriv_tol, searched up to max_order."""
    cfg = with_defaults(cfg)
    scale = local_scale(f, a)
    if abs(f(a)) > zero_tol(scale, cfg):
        raise NonConvergence(f"{a!r} is not a zero of {f.source!r} (|F| = {abs(f(a)):.3g})")
    ders = derivatives(f, int(cfg["max_order"]))
    for k in range(1, len(ders)):
        if abs(ders[k](a)) > deriv_tol(k, scale, cfg):
            return k
    raise OrderOverflow(f"no derivative of order <= {cfg['max_order']} is nonzero at {a!r}")


def _direction_outgoing(theta: float, c: complex, m: int) -> bool:
    # along the ray w = r e^{i theta}, c w^m points outward iff its projection on e^{i theta} is positive
    return (c * cmath.exp(1j * (m - 1) * theta)).real > 0


def sector_directions(f: FieldAst, a: complex, m: Optional[int] = None,
                      cfg: Optional[Dict] = None) -> List[float]:
    """The 2m-2 definite directions (l*pi - arg F^(m)(a))/(m-1) mod 2pi, sorted ascending."""
    if m is None:
        m = zero_order(f, a, cfg)
    if m < 2:
        raise NotMultiple(f"zero at {a!r} is simple")
    lead = f.derivative(m)(a)
    phi = cmath.phase(lead)
    out = []
    for l in range(2 * m - 2):
        th = ((l * math.pi - phi) / (m - 1)) % TWO_PI
        if th >= TWO_PI - 1e-15:
            th = 0.0
        out.append(th)
    return sorted(out)


def classify(f: FieldAst, a: complex, cfg: Optional[Dict] = None,
             logger: Callable = _noop) -> Equilibrium:
    cfg = with_defaults(cfg)
    m = zero_order(f, a, cfg)
    d1 = f.derivative(1)(a)
    if m >= 2:
        return Equilibrium(
            location=a, order=m, eq_class=EquilibriumClass.MULTIPLE,
            derivative_at=d1, leading_coefficient=f.derivative(m)(a),
            sector_directions=tuple(sector_directions(f, a, m, cfg)),
        )
    lam = d1
    mod = abs(lam)
    re_ratio, im_ratio = abs(lam.real) / mod, abs(lam.imag) / mod
    near = cfg["center_tol"] < re_ratio < cfg["near_degenerate_tol"]
    if near:
        logger({"type": "warn", "op": "classify", "msg": "near-degenerate center/focus",
                "location": a, "re_ratio": re_ratio})
    if re_ratio <= cfg["center_tol"]:
        return Equilibrium(a, 1, EquilibriumClass.CENTER, lam, lam,
                           period=abs(TWO_PI / lam.imag), near_degenerate=near)
    stable = lam.real < 0
    if im_ratio <= cfg["center_tol"]:
        cls = EquilibriumClass.STABLE_NODE if stable else EquilibriumClass.UNSTABLE_NODE
    else:
        cls = EquilibriumClass.STABLE_FOCUS if stable else EquilibriumClass.UNSTABLE_FOCUS
    return Equilibrium(a, 1, cls, lam, lam, near_degenerate=near)


def period(f: FieldAst, a: complex, cfg: Optional[Dict] = None,
           logger: Callable = _noop) -> float:
    """T(a) = |2pi / Im F'(a)|, cross-checked against the residue integral of 1/F."""
    from .transit import residue_period

    cfg = with_defaults(cfg)
    eq = classify(f, a, cfg, logger)
    if not eq.is_center:
        raise NotACenter(f"{a!r} is a {eq.eq_class.value}, not a center")
    t = eq.period
    radius = min(0.1, 0.1 * abs(eq.derivative_at))
    for _ in range(8):
        try:
            res = residue_period(f, a, radius, cfg)
            break
        except PoleProximity:
            radius *= 0.5
    else:
        logger({"type": "warn", "op": "period", "msg": "residue cross-check skipped", "location": a})
        return t
    if abs(abs(res) - t) > cfg["period_check_rel"] * t:
        logger({"type": "warn", "op": "period", "msg": "residue period disagrees with 2pi/Im F'(a)",
                "location": a, "derivative_period": t, "residue_period": abs(res)})
    return t


# ---------- zero finding ----------

def _count_zeros(f: FieldAst, fp: FieldAst, rect: Window, cfg: Dict) -> float:
    def h(z):
        return fp.evaluate_array(z) / f.evaluate_array(z)

    q = rectangle_integral(h, rect, cfg)
    return (q.value / (TWO_PI * 1j)).real


def _aberth(coeffs: np.ndarray, max_iter: int = 2000) -> np.ndarray:
    """Simultaneous-iteration roots of the polynomial with ascending `coeffs`."""
    c = np.asarray(coeffs, dtype=complex)
    n = len(c) - 1
    desc = c[::-1] / c[-1]
    ddesc = np.polyder(desc)
    radius = max(1e-3, float(np.max(np.abs(desc[1:]) ** (1.0 / np.arange(1, n + 1)))))
    z = radius * np.exp(1j * (TWO_PI * np.arange(n) / n + 0.4))
    for _ in range(max_iter):
        with np.errstate(all="ignore"):
            ratio = np.polyval(desc, z) / np.polyval(ddesc, z)
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, 1.0)
            inv = 1.0 / diff
            np.fill_diagonal(inv, 0.0)
            w = ratio / (1.0 - ratio * inv.sum(axis=1))
        w = np.where(np.isfinite(w), w, 1e-8)
        z = z - w
        if np.all(np.abs(w) <= 1e-15 * (1.0 + np.abs(z))):
            break
    return z


def _newton(g: FieldAst, gp: FieldAst, z: complex, cfg: Dict) -> complex:
    """Damped Newton on g; halves the step while |g| does not decrease."""
    gz = g(z)
    for _ in range(int(cfg["newton_max_iter"])):
        d = gp(z)
        if d == 0 or not cmath.isfinite(d):
            break
        step = gz / d
        lam = 1.0
        while True:
            zn = z - lam * step
            gn = g(zn)
            if not cmath.isfinite(gn):
                gn = complex(math.inf)
            if abs(gn) < abs(gz) or lam < 1e-6:
                break
            lam *= 0.5
        moved = abs(zn - z)
        z, gz = zn, gn
        if moved <= 1e-15 * (1.0 + abs(z)) or gz == 0:
            return z
    return z


def _polish(f: FieldAst, z: complex, m: int, ders: List[FieldAst], cfg: Dict) -> complex:
    """Newton on F^(m-1), whose zero at a multiple root of order m is simple."""
    zp = _newton(ders[m - 1], ders[m], z, cfg)
    if abs(f(zp)) > max(1e-12, zero_tol(local_scale(f, zp), cfg)):
        raise NonConvergence(f"Newton stalled near {z!r} (|F| = {abs(f(zp)):.3g})")
    return zp


def _cluster(roots: Sequence[complex], radius: float) -> List[Tuple[complex, int]]:
    groups: List[List[complex]] = []
    for r in sorted(roots, key=lambda z: (z.real, z.imag)):
        for g in groups:
            if abs(r - np.mean(g)) <= radius:
                g.append(r)
                break
        else:
            groups.append([r])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def _zeros_polynomial(f, coeffs, window, ders, cfg) -> List[Tuple[complex, int]]:
    roots = _aberth(coeffs)
    out = []
    for z, m in _cluster(roots, cfg["cluster_radius"]):
        if not window.dilate(0.05).contains(z):
            continue
        m = min(m, len(ders) - 1)
        zp = _polish(f, z, m, ders, cfg)
        if window.contains(zp):
            out.append((zp, m))
    return out


_SPLITS = (0.4973, 0.5419, 0.4561, 0.5873)


def _zeros_general(f, fp, window, count, ders, cfg, depth=0) -> List[Tuple[complex, int]]:
    if count == 0:
        return []
    if count == 1:
        z = _newton(f, fp, window.center, cfg)
        if window.dilate(0.02).contains(z) and abs(f(z)) <= max(1e-12, zero_tol(local_scale(f, z), cfg)):
            return [(z, 1)]
    if window.width < cfg["min_subwindow_frac"] * cfg["_root_width"] or depth > 40:
        m = min(count, len(ders) - 1)
        return [(_polish(f, window.center, m, ders, cfg), m)]

    for frac in _SPLITS:
        xm = window.xmin + frac * window.width
        ym = window.ymin + (1 - frac) * window.height
        quads = [Window(window.xmin, window.ymin, xm, ym), Window(xm, window.ymin, window.xmax, ym),
                 Window(window.xmin, ym, xm, window.ymax), Window(xm, ym, window.xmax, window.ymax)]
        counts = [_count_zeros(f, fp, q, cfg) for q in quads]
        rounded = [int(round(c)) for c in counts]
        if all(abs(c - r) < 0.05 for c, r in zip(counts, rounded)) and sum(rounded) == count:
            break
    else:
        raise NonConvergence(f"subwindow zero counts of {window.as_tuple()} never add up to {count}")
    out = []
    for q, n in zip(quads, rounded):
        out.extend(_zeros_general(f, fp, q, n, ders, cfg, depth + 1))
    return out


def find_zeros_with_order(f: FieldAst, window: Window, cfg: Optional[Dict] = None,
                          logger: Callable = _noop) -> List[Tuple[complex, int]]:
    """(zero, multiplicity) pairs inside `window`, sorted by (re, im)."""
    cfg = with_defaults(cfg)
    if f.is_constant:
        if f(0j) == 0:
            raise ConfigError("field is identically zero")
        return []
    ders = derivatives(f, int(cfg["max_order"]) + 1)
    fp = ders[1]

    for _ in range(5):
        scale = window_scale(f, window)
        if np.min(np.abs(f.evaluate_array(_boundary_points(window, 512)))) > zero_tol(scale, cfg):
            break
        logger({"type": "info", "op": "find_zeros", "msg": "zero on window boundary, dilating by 1%"})
        window = window.dilate(0.01)

    counted_f = _count_zeros(f, fp, window, cfg)
    if not math.isfinite(counted_f):
        raise NonConvergence(f"argument-principle integral is not finite for {f.source!r}")
    counted = int(round(counted_f))

    coeffs = f.polynomial_coefficients()
    if coeffs is not None and len(coeffs) > 1:
        found = _zeros_polynomial(f, coeffs, window, ders, cfg)
    else:
        cfg = dict(cfg, _root_width=window.width)
        found = _zeros_general(f, fp, window, counted, ders, cfg)

    # multiplicities from the symbolic derivatives, not from clustering
    found = [(z, zero_order(f, z, cfg)) for z, _ in found]
    total = sum(m for _, m in found)
    if total != counted:
        raise WindingMismatch(total, counted)
    return sorted(found, key=lambda p: (p[0].real, p[0].imag))


def find_zeros(f: FieldAst, window: Window, cfg: Optional[Dict] = None,
               logger: Callable = _noop) -> List[complex]:
    return [z for z, _ in find_zeros_with_order(f, window, cfg, logger)]


def find_equilibria(f: FieldAst, window: Window, cfg: Optional[Dict] = None,
                    logger: Callable = _noop) -> List[Equilibrium]:
    """Classified equilibria in the window, ids assigned in (re, im) order."""
    cfg = with_defaults(cfg)
    out = []
    for i, z in enumerate(find_zeros(f, window, cfg, logger)):
        eq = classify(f, z, cfg, logger)
        if eq.is_center:
            eq = replace(eq, period=period(f, z, cfg, logger))
        out.append(replace(eq, id=i))
    return out


def gap(eq: Equilibrium, equilibria: Sequence[Equilibrium], window: Window) -> float:
    """Distance to the nearest other equilibrium (window diameter when alone)."""
    d = [abs(eq.location - e.location) for e in equilibria if e.id != eq.id]
    return min(d) if d else window.diameter
