# holoflow/integrator.py
"""
Orbits of x' = F(x) on the complex plane.

Integration uses the Dormand-Prince 5(4) pair directly on complex values
(the Re/Im split of the planar system is implicit in complex arithmetic).
A one-sided trace ends with a Fate: convergence to an equilibrium, a closed
periodic orbit, a finite-time blow-up, or an honest Undetermined.
"""
import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Window, with_defaults
from .equilibria import Equilibrium, find_equilibria, gap, window_scale, zero_tol
from .errors import HoloflowError, NotTransversal, StartAtEquilibrium
from .field_expr import FieldAst

FORWARD, BACKWARD = "forward", "backward"
TWO_PI = 2 * math.pi


def _noop(_evt):
    pass


# ---------- Dormand-Prince 5(4) ----------

A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


def dopri_step(fn, z, h, k1):
    """One step of size h from z (k1 = fn(z)); returns (z5, error vector, fn(z5)). Works on arrays."""
    k2 = fn(z + h * (A21 * k1))
    k3 = fn(z + h * (A31 * k1 + A32 * k2))
    k4 = fn(z + h * (A41 * k1 + A42 * k2 + A43 * k3))
    k5 = fn(z + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
    k6 = fn(z + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
    z5 = z + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
    k7 = fn(z5)
    err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
    return z5, err, k7


def hermite(t0, z0, d0, t1, z1, d1, t):
    """Cubic Hermite interpolant through (t0, z0, z0') and (t1, z1, z1')."""
    h = t1 - t0
    with np.errstate(all="ignore"):
        s = np.where(h != 0, (t - t0) / np.where(h != 0, h, 1.0), 0.0)
    s2, s3 = s * s, s * s * s
    return ((2 * s3 - 3 * s2 + 1) * z0 + (s3 - 2 * s2 + s) * h * d0
            + (-2 * s3 + 3 * s2) * z1 + (s3 - s2) * h * d1)


def winding_number(points: Sequence[complex], a: complex) -> float:
    """Lifted angle swept by the closed polyline around a, in turns."""
    p = np.asarray(points, dtype=complex) - a
    if p.size < 2:
        return 0.0
    return float(np.angle(p[1:] / p[:-1]).sum() / TWO_PI)


class _Overflow(Exception):
    pass


def _scalar_rhs(f: FieldAst, sign: float):
    ev = f.evaluate

    def fn(z):
        v = ev(z)
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise _Overflow()
        return sign * v
    return fn


# ---------- fates and traces ----------

class FateKind(str, Enum):
    CONVERGES_TO = "ConvergesTo"
    PERIODIC_AROUND = "PeriodicAround"
    BLOW_UP = "BlowUp"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class Fate:
    kind: FateKind
    equilibrium: Optional[int] = None      # equilibrium id
    period: Optional[float] = None
    t_star: Optional[float] = None         # escape time on the trace clock
    t_star_error: Optional[float] = None
    angle: Optional[float] = None          # escape direction
    reason: Optional[str] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def is_blow_up(self) -> bool:
        return self.kind == FateKind.BLOW_UP

    def converges_to(self, eq_id: int) -> bool:
        return self.kind == FateKind.CONVERGES_TO and self.equilibrium == eq_id

    def as_dict(self) -> Dict[str, Any]:
        d = {"kind": self.kind.value}
        for k in ("equilibrium", "period", "t_star", "t_star_error", "angle", "reason"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.diagnostics:
            d["diagnostics"] = dict(self.diagnostics)
        return d


@dataclass
class OrbitTrace:
    """Accepted-step samples with t strictly increasing; dz holds F at each sample."""
    t: np.ndarray
    z: np.ndarray
    dz: np.ndarray
    forward_fate: Optional[Fate] = None
    backward_fate: Optional[Fate] = None
    t_plus: Optional[float] = None        # None: side not integrated
    t_minus: Optional[float] = None

    @property
    def samples(self) -> List[Tuple[float, complex]]:
        return list(zip(self.t.tolist(), self.z.tolist()))

    @property
    def start(self) -> complex:
        return complex(self.z[int(np.argmin(np.abs(self.t)))])

    @property
    def span(self) -> Tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def at(self, t):
        """Dense output by cubic Hermite interpolation between accepted steps."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.clip(np.searchsorted(self.t, t_arr, side="right") - 1, 0, len(self.t) - 2)
        out = hermite(self.t[k], self.z[k], self.dz[k], self.t[k + 1], self.z[k + 1], self.dz[k + 1], t_arr)
        return complex(out[0]) if np.ndim(t) == 0 else out

    def dense(self, per_step: int = 4) -> Tuple[np.ndarray, np.ndarray]:
        """Samples plus `per_step - 1` interpolated points inside every step."""
        if len(self.t) < 2:
            return self.t.copy(), self.z.copy()
        s = np.arange(per_step) / per_step
        t0, t1 = self.t[:-1, None], self.t[1:, None]
        tt = t0 + (t1 - t0) * s[None, :]
        zz = hermite(t0, self.z[:-1, None], self.dz[:-1, None], t1, self.z[1:, None], self.dz[1:, None], tt)
        return (np.append(tt.ravel(), self.t[-1]), np.append(zz.ravel(), self.z[-1]))

    def piece(self, t1: float, t2: float, per_step: int = 2) -> Tuple[np.ndarray, np.ndarray]:
        """Densified polyline restricted to [t1, t2] with interpolated endpoints."""
        tt, zz = self.dense(per_step)
        inside = (tt > t1) & (tt < t2)
        t_out = np.concatenate([[t1], tt[inside], [t2]])
        z_out = np.concatenate([[self.at(t1)], zz[inside], [self.at(t2)]])
        return t_out, z_out

    def distance_to(self, p: complex, per_step: int = 8) -> float:
        """Distance from p to the densified polyline (segments, not just vertices)."""
        return float(self.distances_to(np.array([p], dtype=complex), per_step)[0])

    def distances_to(self, points: np.ndarray, per_step: int = 8) -> np.ndarray:
        _, zz = self.dense(per_step)
        points = np.asarray(points, dtype=complex)
        if len(zz) < 2:
            return np.abs(zz[0] - points) if len(zz) else np.full(points.shape, math.inf)
        a, b = zz[:-1], zz[1:]
        d = b - a
        dd = np.abs(d) ** 2
        out = np.empty(points.shape, dtype=float)
        for i, p in enumerate(points):
            with np.errstate(all="ignore"):
                s = np.where(dd > 0, ((p - a) * np.conj(d)).real / dd, 0.0)
            s = np.clip(s, 0.0, 1.0)
            out[i] = np.min(np.abs(a + s * d - p))
        return out

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.z)))

    @classmethod
    def join(cls, backward: "OrbitTrace", forward: "OrbitTrace") -> "OrbitTrace":
        return cls(
            t=np.concatenate([backward.t[:-1], forward.t]),
            z=np.concatenate([backward.z[:-1], forward.z]),
            dz=np.concatenate([backward.dz[:-1], forward.dz]),
            forward_fate=forward.forward_fate,
            backward_fate=backward.backward_fate,
            t_plus=forward.t_plus,
            t_minus=backward.t_minus,
        )


# ---------- blow-up detection ----------

@dataclass(frozen=True)
class BlowUpEstimate:
    remaining_from_start: float   # t* on the integration clock (nonnegative)
    error: float
    ratios: Tuple[float, ...]


def detect_blow_up(crossings: Sequence[Tuple[float, float]], cfg: Optional[Dict] = None) -> Optional[BlowUpEstimate]:
    """
    Finite escape time from the clock readings at dyadic |z| thresholds.

    `crossings` are (threshold, time) pairs with thresholds doubling. The time
    increments must shrink geometrically (ratio below blowup_ratio_max over the
    last blowup_contractions thresholds); the Aitken limit of the crossing
    times is then t*, and its last change is the error. Returns None when the
    increments do not contract, e.g. for x' = x where every doubling costs ln 2.
    """
    cfg = with_defaults(cfg)
    taus = np.array([t for _, t in crossings], dtype=float)
    if taus.size < 5:
        return None
    d = np.diff(taus)
    if np.any(d <= 0):
        return None
    q = d[1:] / d[:-1]
    nc = int(cfg["blowup_contractions"])
    last_q = q[-nc:]
    if not np.all((last_q > 0) & (last_q < cfg["blowup_ratio_max"])):
        return None
    est = taus[2:] + d[1:] * q / (1.0 - q)
    spreads = np.abs(np.diff(est))
    floor = 1e-12 * (1.0 + abs(est[-1]))
    tail = spreads[-nc:]
    contracting = all(b <= a or b <= floor for a, b in zip(tail[:-1], tail[1:]))
    if not contracting:
        return None
    return BlowUpEstimate(float(est[-1]), float(max(spreads[-1], floor)), tuple(float(x) for x in q))


# ---------- one-sided integration ----------

@dataclass
class _EqInfo:
    eq: Equilibrium
    r_loc: float          # local-model disk for multiple equilibria


class _Tracer:
    def __init__(self, f: FieldAst, sign: float, window: Window, equilibria: Sequence[Equilibrium],
                 cfg: Dict, logger: Callable):
        self.f, self.sign, self.window, self.cfg, self.logger = f, sign, window, cfg, logger
        self.fn = _scalar_rhs(f, sign)
        self.eqs = [_EqInfo(e, self._model_disk(e, equilibria)) for e in equilibria]
        self.centers = [e for e in equilibria if e.is_center]
        self.length = 1e-2 * window.diameter
        self.ladder_start = 2.0 * window.radius
        self.escape_radius = float(cfg["escape_radius"] or 1e3 * window.diameter)

    def _model_disk(self, e: Equilibrium, equilibria: Sequence[Equilibrium]) -> float:
        """Local-model capture disk, small enough that the model's approach fits the time budget."""
        cfg = self.cfg
        r = cfg["multiple_capture_frac"] * gap(e, equilibria, self.window)
        if e.order < 2:
            return r
        m, c = e.order, abs(e.model_coefficient)
        # w' = c w^m needs about 1/((m-1) c |w|^(m-1)) to reach |w|
        r_time = ((m - 1) * c * cfg["model_capture_time_frac"] * cfg["t_max"]) ** (-1.0 / (m - 1))
        return min(r, max(cfg["capture_radius"], r_time))

    # -- capture --

    def _captured(self, z: complex, fz: complex) -> Optional[Equilibrium]:
        cfg = self.cfg
        for info in self.eqs:
            e = info.eq
            w = z - e.location
            if e.order == 1:
                if (abs(w) <= cfg["capture_radius"] and abs(fz) <= cfg["capture_residual"]
                        and (self.sign * e.derivative_at).real < 0):
                    return e
                continue
            if abs(w) > info.r_loc or w == 0:
                if w == 0:
                    return e
                continue
            if self._model_predicts_capture(e, w, fz, info.r_loc):
                return e
        return None

    def _model_predicts_capture(self, e: Equilibrium, w: complex, fz: complex, r_loc: float) -> bool:
        m, c = e.order, e.model_coefficient
        model = c * w ** m
        if abs(fz - model) > self.cfg["local_model_tol"] * abs(model):
            return False
        u0 = w ** (1 - m)
        v = (1 - m) * self.sign * c
        tstar = -(u0 * v.conjugate()).real / abs(v) ** 2
        umin = abs(u0) if tstar <= 0 else abs((u0 * v.conjugate()).imag) / abs(v)
        if umin == 0:
            return False
        return umin ** (-1.0 / (m - 1)) <= r_loc

    # -- periodic return --

    def _refine_return(self, z0, n, tau_p, z_p, k_p, h_acc):
        lo, hi = 0.0, h_acc
        zc = z_p
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            zm, _, _ = dopri_step(self.fn, z_p, mid, k_p)
            if ((zm - z0) * n.conjugate()).real < 0:
                lo = mid
            else:
                hi, zc = mid, zm
            if hi - lo <= 1e-15 * (1.0 + abs(tau_p)):
                break
        zc, _, kc = dopri_step(self.fn, z_p, hi, k_p)
        return tau_p + hi, zc, kc

    def _enclosed_center(self, zs: Sequence[complex]) -> Optional[Equilibrium]:
        closed = list(zs) + [zs[0]]
        for e in self.centers:
            if abs(round(winding_number(closed, e.location))) == 1:
                return e
        return None

    # -- main loop --

    def run(self, z0: complex):
        cfg = self.cfg
        fn = self.fn
        t_max = float(cfg["t_max"])
        t_end = cfg.get("t_end")
        max_steps = int(cfg["max_steps"])
        rtol, atol, c_bound = cfg["rtol"], cfg["atol"], cfg["step_bound_c"]

        z = complex(z0)
        k = fn(z)
        taus, zs, ks = [0.0], [z], [k]
        h = min(0.01 * max(abs(z), self.length) / abs(k), t_max)
        tau = 0.0
        n_dir = k / abs(k)
        far = 0.0
        ladder: List[Tuple[float, float]] = []
        next_r = self.ladder_start
        while next_r <= abs(z):
            next_r *= 2.0
        attempts, overflow_hits = 0, 0
        fate = None

        while fate is None:
            attempts += 1
            bound = c_bound * max(abs(z), self.length) / abs(k)
            h = min(h, bound)
            if t_end is not None:
                h = min(h, t_end - tau)
            try:
                z5, err, k7 = dopri_step(fn, z, h, k)
            except _Overflow:
                overflow_hits += 1
                h *= 0.25
                if overflow_hits >= 8:
                    fate = self._escape_fate(ladder, z, tau, "overflow")
                continue
            overflow_hits = 0
            errn = abs(err) / (atol + rtol * max(abs(z), abs(z5)))
            fac = 5.0 if errn == 0 else min(5.0, max(0.2, 0.9 * errn ** -0.2))
            if errn > 1.0:
                h *= fac
                if h <= 1e-14 * max(1.0, abs(tau)):
                    fate = self._escape_fate(ladder, z, tau, "step underflow", fallback="step-underflow")
                elif attempts > 4 * max_steps:
                    fate = Fate(FateKind.UNDETERMINED, reason="budget")
                continue
            if tau + h == tau:
                fate = self._escape_fate(ladder, z, tau, "time resolution", fallback="step-underflow")
                break

            tau_p, z_p, k_p = tau, z, k
            tau, z, k = tau + h, z5, k7
            h_acc = h
            h *= fac
            taus.append(tau)
            zs.append(z)
            ks.append(k)

            # dyadic |z| thresholds for blow-up detection
            while abs(z) >= next_r:
                ladder.append((next_r, self._threshold_time(tau_p, z_p, k_p, tau, z, k, next_r)))
                next_r *= 2.0
                if fate is None and ladder[-1][0] >= self.escape_radius and len(ladder) >= 5:
                    early = self._escape_fate(ladder, z, tau, "escape radius", fallback="")
                    if early.is_blow_up and early.t_star_error <= 1e-9 * (1.0 + abs(early.t_star)):
                        fate = early
            if ladder and abs(z) < ladder[-1][0] / 4.0:
                ladder.clear()
                next_r = self.ladder_start
                while next_r <= abs(z):
                    next_r *= 2.0

            if fate is not None:
                break
            if abs(z) >= cfg["extrap_radius"]:
                fate = self._escape_fate(ladder, z, tau, "extrapolation radius")
                break
            if len(ladder) >= 2 and ladder[-1][1] - ladder[-2][1] <= _time_floor(tau):
                # crossing times no longer resolve on the clock; fast x^k with k >= 3 lands here
                fate = self._escape_fate(ladder, z, tau, "time resolution")
                break

            eq = self._captured(z, self.sign * k)
            if eq is not None:
                fate = Fate(FateKind.CONVERGES_TO, equilibrium=eq.id,
                            diagnostics={"residual": abs(k), "distance": abs(z - eq.location)})
                break

            if self.centers:
                far = max(far, abs(z - zs[0]))
                g_prev = ((z_p - zs[0]) * n_dir.conjugate()).real
                g_new = ((z - zs[0]) * n_dir.conjugate()).real
                if g_prev < 0 <= g_new and abs(z - zs[0]) < 0.5 * far:
                    tau_c, zc, kc = self._refine_return(zs[0], n_dir, tau_p, z_p, k_p, h_acc)
                    residual = abs(zc - zs[0])
                    if residual <= cfg["periodic_tol"]:
                        taus[-1], zs[-1], ks[-1] = tau_c, zc, kc
                        center = self._enclosed_center(zs)
                        fate = Fate(FateKind.PERIODIC_AROUND,
                                    equilibrium=center.id if center else None,
                                    period=tau_c, diagnostics={"residual": residual})
                        break

            if t_end is not None and tau >= t_end:
                fate = Fate(FateKind.UNDETERMINED, reason="time-limit")
            elif tau >= t_max or len(taus) > max_steps:
                fate = self._budget_fate(ladder, zs, tau, t_max)

        return np.array(taus), np.array(zs, dtype=complex), np.array(ks, dtype=complex), fate

    def _threshold_time(self, t0, z0, k0, t1, z1, k1, r) -> float:
        if not t1 > t0:
            return float(t1)
        lo, hi = t0, t1
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if abs(hermite(t0, z0, k0, t1, z1, k1, mid)) < r:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def _escape_fate(self, ladder, z, tau, trigger, fallback: str = "unbounded-slow") -> Fate:
        ladder = _resolved(ladder)
        est = detect_blow_up(ladder, self.cfg)
        if est is None:
            return Fate(FateKind.UNDETERMINED, reason=fallback,
                        diagnostics={"trigger": trigger, "thresholds": len(ladder), "abs_z": abs(z)})
        return Fate(FateKind.BLOW_UP, t_star=self.sign * est.remaining_from_start,
                    t_star_error=est.error, angle=cmath.phase(z) % TWO_PI,
                    diagnostics={"trigger": trigger, "thresholds": len(ladder),
                                 "ratios": list(est.ratios[-3:])})

    def _budget_fate(self, ladder, zs, tau, t_max) -> Fate:
        """
        Out of time or steps. A contracting ladder still proves a blow-up;
        slow escape needs the clock itself to run out while |z| keeps growing
        beyond the window. Anything else is a plain budget exhaustion.
        """
        if len(ladder) >= 5:
            fate = self._escape_fate(ladder, zs[-1], tau, "budget", fallback="")
            if fate.is_blow_up:
                return fate
        mags = np.abs(np.asarray(zs))
        outward = mags[-1] >= 0.999 * mags[: max(1, int(0.9 * len(mags)))].max()
        if tau >= t_max and outward and mags[-1] > self.window.radius:
            return Fate(FateKind.UNDETERMINED, reason="unbounded-slow",
                        diagnostics={"trigger": "time budget", "abs_z": float(mags[-1])})
        return Fate(FateKind.UNDETERMINED, reason="budget",
                    diagnostics={"t": tau, "steps": len(zs), "abs_z": float(mags[-1])})


def _time_floor(tau: float) -> float:
    return 64.0 * np.finfo(float).eps * (1.0 + abs(tau))


def _resolved(ladder: Sequence[Tuple[float, float]]) -> List[Tuple[float, float]]:
    """Longest prefix of the threshold ladder whose crossing times still increase above clock resolution."""
    out = list(ladder[:1])
    for r, t in ladder[1:]:
        if t - out[-1][1] <= _time_floor(t):
            break
        out.append((r, t))
    return out


def _prepare(f, z0, window, equilibria, cfg, logger):
    if window is None:
        window = Window.around([z0] + [e.location for e in (equilibria or [])])
    if equilibria is None:
        try:
            equilibria = find_equilibria(f, window, cfg, logger)
        except HoloflowError as e:
            logger({"type": "warn", "op": "integrate", "msg": f"equilibria unavailable: {e}"})
            equilibria = []
    fz = f(z0)
    if abs(fz) <= zero_tol(window_scale(f, window), cfg) or any(
            abs(z0 - e.location) <= cfg["capture_radius"] for e in equilibria):
        raise StartAtEquilibrium(f"{z0!r} is an equilibrium of {f.source!r}")
    return window, equilibria


def integrate(f: FieldAst, z0: complex, direction: str = FORWARD, budget: Optional[Dict] = None,
              cfg: Optional[Dict] = None, equilibria: Optional[Sequence[Equilibrium]] = None,
              window: Optional[Window] = None, logger: Callable = _noop) -> OrbitTrace:
    """One-sided trace from z0. `budget` may override t_max / max_steps and add t_end."""
    cfg = with_defaults(cfg)
    cfg.update(budget or {})
    z0 = complex(z0)
    window, equilibria = _prepare(f, z0, window, equilibria, cfg, logger)
    sign = 1.0 if direction == FORWARD else -1.0
    taus, zs, ks, fate = _Tracer(f, sign, window, equilibria, cfg, logger).run(z0)
    if fate.kind == FateKind.UNDETERMINED:
        logger({"type": "warn", "op": "integrate", "msg": f"fate undetermined ({fate.reason})",
                "z0": z0, "direction": direction})
    bound = fate.t_star if fate.is_blow_up else sign * math.inf
    if sign > 0:
        return OrbitTrace(taus, zs, ks, forward_fate=fate, t_plus=bound)
    return OrbitTrace(-taus[::-1], zs[::-1], -ks[::-1], backward_fate=fate, t_minus=bound)


def trace_orbit(f: FieldAst, z0: complex, cfg: Optional[Dict] = None,
                equilibria: Optional[Sequence[Equilibrium]] = None, window: Optional[Window] = None,
                budget: Optional[Dict] = None, logger: Callable = _noop) -> OrbitTrace:
    """Both-sided trace through z0."""
    cfg = with_defaults(cfg)
    window, equilibria = _prepare(f, complex(z0), window, equilibria, cfg, logger)
    fwd = integrate(f, z0, FORWARD, budget, cfg, equilibria, window, logger)
    bwd = integrate(f, z0, BACKWARD, budget, cfg, equilibria, window, logger)
    return OrbitTrace.join(bwd, fwd)


# ---------- transversal crossings ----------

def find_crossing(f: FieldAst, trace: OrbitTrace, segment: Tuple[complex, complex],
                  cfg: Optional[Dict] = None) -> Optional[Tuple[float, complex]]:
    """First crossing of the oriented segment p->q after t = 0, refined to 1e-12 in time."""
    cfg = with_defaults(cfg)
    p, q = complex(segment[0]), complex(segment[1])
    length = abs(q - p)
    u = (q - p) / length
    sin_tol = math.sin(cfg["angle_tol"])
    for s in np.linspace(0.0, 1.0, 16):
        v = f(p + s * (q - p))
        if v == 0 or abs((v * u.conjugate()).imag) < sin_tol * abs(v):
            raise NotTransversal(f"flow is tangent to the segment near {p + s * (q - p)!r}")

    def side(z):
        return ((z - p) * u.conjugate()).imag

    def on_segment(z):
        s = ((z - p) * u.conjugate()).real / length
        return -1e-9 <= s <= 1 + 1e-9

    fn = _scalar_rhs(f, 1.0)
    idx = np.nonzero(trace.t >= 0)[0]
    for a, b in zip(idx[:-1], idx[1:]):
        za, zb = complex(trace.z[a]), complex(trace.z[b])
        da, db = side(za), side(zb)
        if da == 0 and on_segment(za):
            return float(trace.t[a]), za
        if da * db > 0 or (da == 0):
            continue
        ka = complex(trace.dz[a])
        lo, hi = 0.0, float(trace.t[b] - trace.t[a])
        zc = zb
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            zm, _, _ = dopri_step(fn, za, mid, ka)
            if side(zm) * da > 0:
                lo = mid
            else:
                hi, zc = mid, zm
        if on_segment(zc):
            return float(trace.t[a] + hi), zc
    return None


# ---------- batched stepping for grids ----------

class BatchStepper:
    """
    DOPRI5 over many starting points at once; each point keeps its own clock
    and step size. Non-finite stages shrink the step; eight in a row mark the
    point as escaped.
    """

    def __init__(self, f: FieldAst, z0: np.ndarray, sign: float, cfg: Dict, length_scale: float):
        self.f, self.sign = f, sign
        self.rtol, self.atol, self.c = cfg["grid_rtol"], cfg["atol"], cfg["step_bound_c"]
        self.length = length_scale
        self.z = np.array(z0, dtype=complex).ravel()
        self.k = self._fn(self.z)
        self.tau = np.zeros(self.z.shape)
        self.steps = np.zeros(self.z.shape, dtype=int)
        self.bad = np.zeros(self.z.shape, dtype=int)
        self.escaped = ~np.isfinite(self.k)
        with np.errstate(all="ignore"):
            self.h = 0.01 * np.maximum(np.abs(self.z), self.length) / np.abs(self.k)
        self.h = np.where(np.isfinite(self.h), self.h, 1.0)

    def _fn(self, z):
        return self.sign * self.f.evaluate_array(z)

    def step(self, idx: np.ndarray, h_cap: Optional[np.ndarray] = None):
        """One attempt for points idx; returns (accepted indices, their previous z)."""
        z, k1 = self.z[idx], self.k[idx]
        with np.errstate(all="ignore"):
            bound = self.c * np.maximum(np.abs(z), self.length) / np.abs(k1)
            h = np.minimum(self.h[idx], bound)
            if h_cap is not None:
                h = np.minimum(h, h_cap)
            z5, err, k7 = dopri_step(self._fn, z, h, k1)
            errn = np.abs(err) / (self.atol + self.rtol * np.maximum(np.abs(z), np.abs(z5)))
            bad = ~(np.isfinite(z5) & np.isfinite(k7) & np.isfinite(errn))
            acc = (errn <= 1.0) & ~bad
            fac = np.where(errn == 0, 5.0, np.clip(0.9 * errn ** -0.2, 0.2, 5.0))
        fac = np.where(bad, 0.25, fac)
        self.h[idx] = h * fac
        self.bad[idx] = np.where(bad, self.bad[idx] + 1, 0)
        self.escaped[idx[self.bad[idx] >= 8]] = True
        ia = idx[acc]
        prev = z[acc]
        self.z[ia] = z5[acc]
        self.k[ia] = k7[acc]
        self.tau[ia] += h[acc]
        self.steps[ia] += 1
        return ia, prev
