# holoflow/quadrature.py
"""
Adaptive composite Gauss-Legendre quadrature over parameterized complex paths.

All panel evaluations of one refinement level go through the integrand in a
single vectorized call, so the integrand must accept numpy arrays.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .config import Window, with_defaults

# ---------- result ----------

@dataclass(frozen=True)
class QuadResult:
    value: complex
    error: float          # sum of |fine - coarse| over accepted panels
    panels: int
    exhausted: bool = False


@lru_cache(maxsize=8)
def _rule(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _panel_sums(g, lo, hi, x, w):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    s = half[:, None] * x[None, :] + mid[:, None]
    vals = np.asarray(g(s.ravel()), dtype=complex).reshape(s.shape)
    return half * (vals @ w)


def integrate(g: Callable[[np.ndarray], np.ndarray], edges: Sequence[float],
              cfg: Optional[Dict] = None) -> QuadResult:
    """
    Integrate g(s) ds over [edges[0], edges[-1]]; `edges` are the initial panels.
    A panel is accepted when its two-half estimate differs from the whole-panel
    estimate by at most max(quad_abs_tol, quad_rel_tol*|value|), prorated by panel length.
    """
    cfg = with_defaults(cfg)
    x, w = _rule(int(cfg["quad_order"]))
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1].copy(), edges[1:].copy()
    total_len = float(edges[-1] - edges[0])
    if total_len <= 0:
        return QuadResult(0j, 0.0, 0)

    with np.errstate(all="ignore"):
        coarse = _panel_sums(g, lo, hi, x, w)
        value, err, panels = 0j, 0.0, 0
        exhausted = False
        for _ in range(int(cfg["quad_max_depth"])):
            mid = 0.5 * (lo + hi)
            left = _panel_sums(g, lo, mid, x, w)
            right = _panel_sums(g, mid, hi, x, w)
            fine = left + right
            diff = np.abs(fine - coarse)
            scale = abs(value + fine.sum())
            if not math.isfinite(scale):
                # non-finite integrand: stop refining and let the caller see it
                return QuadResult(complex(np.nan, np.nan), math.inf, panels + len(lo), True)
            tol = max(cfg["quad_abs_tol"], cfg["quad_rel_tol"] * scale) * (hi - lo) / total_len
            ok = (diff <= tol) | ((hi - lo) <= 1e-15 * total_len)
            value += fine[ok].sum()
            err += float(diff[ok].sum())
            panels += int(ok.sum())
            if ok.all():
                break
            keep = ~ok
            lo, mid_k, hi = lo[keep], mid[keep], hi[keep]
            lo, hi = np.concatenate([lo, mid_k]), np.concatenate([mid_k, hi])
            coarse = np.concatenate([left[keep], right[keep]])
        else:
            value += fine[~ok].sum()
            err += float(diff[~ok].sum())
            panels += int((~ok).sum())
            exhausted = True
    return QuadResult(complex(value), err, panels, exhausted)


# ---------- paths ----------

def polyline_integral(h: Callable[[np.ndarray], np.ndarray], points: Sequence[complex],
                      cfg: Optional[Dict] = None) -> QuadResult:
    """Integral of h(z) dz along the polyline through `points` (one initial panel per segment)."""
    p = np.asarray(points, dtype=complex)
    if len(p) < 2:
        return QuadResult(0j, 0.0, 0)
    d = np.diff(p)
    n = len(d)

    def g(s):
        k = np.clip(np.floor(s).astype(int), 0, n - 1)
        return h(p[k] + (s - k) * d[k]) * d[k]

    return integrate(g, np.arange(n + 1, dtype=float), cfg)


def segment_integral(h, z0: complex, z1: complex, cfg: Optional[Dict] = None,
                     panels: int = 8) -> QuadResult:
    d = complex(z1) - complex(z0)
    return integrate(lambda s: h(z0 + s * d) * d, np.linspace(0.0, 1.0, panels + 1), cfg)


def circle_integral(h, center: complex, radius: float, cfg: Optional[Dict] = None,
                    panels: int = 16) -> QuadResult:
    """Positively oriented circle."""
    def g(theta):
        e = np.exp(1j * theta)
        return h(center + radius * e) * (1j * radius * e)

    return integrate(g, np.linspace(0.0, 2 * math.pi, panels + 1), cfg)


def rectangle_integral(h, window: Window, cfg: Optional[Dict] = None) -> QuadResult:
    """Positively oriented boundary of `window`, each side split into 8 panels."""
    c = window.corners()
    pts = []
    for a, b in zip(c, c[1:] + c[:1]):
        pts.extend(a + (b - a) * np.arange(8) / 8.0)
    pts.append(c[0])
    return polyline_integral(h, pts, cfg)
