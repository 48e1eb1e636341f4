# holoflow/separatrix.py
"""
Basins, elliptic sectors and their boundary orbits.

Grid first, trace second: every cell center is integrated (vectorized, one
thread per chunk of rows) and labelled by its fate; adjacent cells whose
labels differ, or whose swept angle around the basin's equilibrium jumps by
more than pi, bracket a boundary orbit. Brackets are bisected to a seed,
seeds are traced both ways and classified by where they blow up.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .config import Window, with_defaults, worker_count
from .equilibria import Equilibrium, find_equilibria, gap
from .errors import (ConfigError, EmptyBoundary, MalformedComponent,
                     SectorSeedFailure, StartAtEquilibrium)
from .field_expr import FieldAst
from .integrator import BatchStepper, FateKind, OrbitTrace, trace_orbit

TWO_PI = 2 * math.pi

# cell labels
OUTSIDE, IN_BASIN, IN_SECTOR, EQUILIBRIUM, UNRESOLVED = 0, 1, 2, 3, 4
LABEL_NAMES = {OUTSIDE: "Outside", IN_BASIN: "InBasin", IN_SECTOR: "InSector",
               EQUILIBRIUM: "Equilibrium", UNRESOLVED: "Unresolved"}

# batch outcomes (>= 0 is an index into the equilibrium list)
ESCAPED, BUDGET, PERIODIC, STOPPED = -1, -2, -3, -4

POSITIVE, NEGATIVE, DOUBLE, NONE, UNDETERMINED = "positive", "negative", "double", "none", "undetermined"
SEPARATRIX_SIDES = (POSITIVE, NEGATIVE, DOUBLE)


def _noop(_evt):
    pass


class RegionKind(str, Enum):
    CENTER_BASIN = "CenterBasin"
    NODE_FOCUS_BASIN = "NodeFocusBasin"
    ELLIPTIC_SECTOR = "EllipticSector"
    HETEROCLINIC = "HeteroclinicRegion"


def default_region(eq: Equilibrium) -> RegionKind:
    if eq.is_multiple:
        return RegionKind.ELLIPTIC_SECTOR
    if eq.is_center:
        return RegionKind.CENTER_BASIN
    return RegionKind.NODE_FOCUS_BASIN


# ---------- batched limits ----------

@dataclass
class _Limits:
    outcome: np.ndarray
    center: np.ndarray
    sweep: np.ndarray
    far: np.ndarray
    returned: np.ndarray
    near_ref: np.ndarray


def _node_capture_radius(e: Equilibrium, equilibria, window, f: FieldAst, cfg) -> float:
    r = cfg["grid_capture_frac"] * gap(e, equilibria, window)
    f2 = abs(f.derivative(2)(e.location))
    if f2 > 0:
        r = min(r, 0.2 * abs(e.derivative_at) / f2)
    return r


def _model_capture(w, fz, e: Equilibrium, sign: float, r_loc: float, tol: float) -> np.ndarray:
    m, c = e.order, e.model_coefficient
    with np.errstate(all="ignore"):
        model = c * w ** m
        valid = np.abs(fz - model) <= tol * np.abs(model)
        u0 = w ** (1 - m)
        v = (1 - m) * sign * c
        cross = u0 * np.conj(v)
        tstar = -cross.real / abs(v) ** 2
        umin = np.where(tstar <= 0, np.abs(u0), np.abs(cross.imag) / abs(v))
        pred = (umin > 0) & (umin ** (-1.0 / (m - 1)) <= r_loc)
    return (w == 0) | ((np.abs(w) <= r_loc) & valid & pred)


def _limits(f: FieldAst, z0: np.ndarray, sign: float, equilibria: Sequence[Equilibrium],
            ref: Optional[int], window: Window, cfg: Dict, t_stop: Optional[float] = None) -> _Limits:
    n = len(z0)
    st = BatchStepper(f, z0, sign, cfg, 1e-2 * window.diameter)
    a = equilibria[ref].location if ref is not None else 0j

    traps = []
    for j, e in enumerate(equilibria):
        if e.order >= 2:
            traps.append((j, "model", cfg["multiple_capture_frac"] * gap(e, equilibria, window)))
        elif not e.is_center and (sign * e.derivative_at).real < 0:
            traps.append((j, "disk", _node_capture_radius(e, equilibria, window, f, cfg)))

    centers = [] if t_stop is not None else sorted(
        (e.period, j) for j, e in enumerate(equilibria) if e.is_center and e.period)
    cp_times = np.array([p for p, _ in centers] + [math.inf])
    cp_i = np.zeros(n, dtype=int)
    winds = np.zeros((len(centers), n))

    outcome = np.full(n, BUDGET)
    center = np.full(n, -1)
    sweep = np.zeros(n)
    far = st.z.copy()
    far_d = np.abs(far - a)
    near_ref = far_d < 1e-6
    returned = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    def finish(ids, code):
        outcome[ids] = code
        active[ids] = False

    finish(np.nonzero(st.escaped)[0], ESCAPED)

    def captures(ids, z, fz):
        for j, kind, r in traps:
            live = active[ids]
            if not live.any():
                return
            w = z - equilibria[j].location
            if kind == "disk":
                hit = live & (np.abs(w) <= r)
            else:
                hit = live & _model_capture(w, fz, equilibria[j], sign, r, cfg["local_model_tol"])
            if hit.any():
                if j == ref and kind == "disk":
                    lam = sign * equilibria[j].derivative_at
                    k = lam.imag / lam.real
                    sweep[ids[hit]] -= k * np.log(np.abs(w[hit]))
                finish(ids[hit], j)

    all_ids = np.arange(n)
    captures(all_ids[active], st.z[active], sign * st.k[active])

    t_max, max_steps = cfg["grid_t_max"], cfg["grid_max_steps"]
    for _ in range(4 * int(max_steps)):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        cap = t_max - st.tau[idx]
        if t_stop is not None:
            cap = np.minimum(cap, t_stop - st.tau[idx])
        if centers:
            cap = np.minimum(cap, cp_times[cp_i[idx]] - st.tau[idx])
        cap = np.maximum(cap, 1e-300)
        acc, prev = st.step(idx, cap)

        esc = idx[st.escaped[idx] & active[idx]]
        finish(esc, ESCAPED)
        if acc.size == 0:
            continue
        z = st.z[acc]
        with np.errstate(all="ignore"):
            sweep[acc] += np.angle((z - a) / (prev - a))
            for c, (_, j) in enumerate(centers):
                b = equilibria[j].location
                winds[c, acc] += np.angle((z - b) / (prev - b))
        d = np.abs(z - a)
        further = d > far_d[acc]
        far[acc[further]] = z[further]
        far_d[acc] = np.maximum(far_d[acc], d)
        near_ref[acc] |= d < 1e-6

        finish(acc[np.abs(z) > cfg["grid_escape_radius"]], ESCAPED)
        captures(acc, z, sign * st.k[acc])

        tau = st.tau[acc]
        if centers:
            due = active[acc] & (tau >= cp_times[cp_i[acc]] * (1 - 1e-14))
            for i in np.nonzero(due)[0]:
                p = acc[i]
                c = cp_i[p]
                back = abs(st.z[p] - z0[p]) <= cfg["return_tol"] * (1 + abs(z0[p]))
                if back and abs(round(winds[c, p] / TWO_PI)) == 1:
                    center[p] = centers[c][1]
                    finish(np.array([p]), PERIODIC)
                else:
                    cp_i[p] += 1
        if t_stop is not None:
            done = acc[active[acc] & (tau >= t_stop * (1 - 1e-14))]
            returned[done] = np.abs(st.z[done] - z0[done]) <= cfg["return_tol"] * (1 + np.abs(z0[done]))
            finish(done, STOPPED)
        over = acc[active[acc] & ((tau >= t_max) | (st.steps[acc] >= max_steps))]
        finish(over, BUDGET)

    return _Limits(outcome, center, sweep, far, returned, near_ref)


# ---------- point classification ----------

def _sector_index(angles: np.ndarray, directions: Sequence[float]) -> np.ndarray:
    th = np.asarray(directions)
    return (np.searchsorted(th, np.mod(angles, TWO_PI), side="right") - 1) % len(th)


class PointClassifier:
    """Labels arbitrary points for one region; shared by the grid and the boundary bisection."""

    def __init__(self, f: FieldAst, eq: Equilibrium, kind: RegionKind, equilibria: Sequence[Equilibrium],
                 window: Window, cfg: Dict, partner: Optional[Equilibrium] = None):
        self.f, self.eq, self.kind, self.window, self.cfg = f, eq, kind, window, cfg
        self.equilibria = list(equilibria)
        self.partner = partner
        self.ref = next(i for i, e in enumerate(self.equilibria) if e.id == eq.id)
        self.partner_idx = None if partner is None else next(
            i for i, e in enumerate(self.equilibria) if e.id == partner.id)

    def __call__(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        z0 = np.asarray(points, dtype=complex).ravel()
        labels = np.full(z0.shape, UNRESOLVED, dtype=np.int8)
        sector = np.full(z0.shape, -1, dtype=int)
        sweep = np.full(z0.shape, np.nan)
        if z0.size == 0:
            return labels, sector, sweep
        f, eqs, ref, cfg, win = self.f, self.equilibria, self.ref, self.cfg, self.window

        if self.kind == RegionKind.CENTER_BASIN:
            lim = _limits(f, z0, 1.0, eqs, ref, win, cfg, t_stop=self.eq.period)
            turns = lim.sweep / TWO_PI
            stopped = lim.outcome == STOPPED
            inside = stopped & lim.returned & (np.abs(np.abs(turns) - 1) < 0.25) & ~lim.near_ref
            outside = (lim.outcome == ESCAPED) | (lim.outcome >= 0) | (stopped & (np.abs(turns) < 0.25))
            labels[outside] = OUTSIDE
            labels[inside] = IN_BASIN

        elif self.kind == RegionKind.NODE_FOCUS_BASIN:
            sign = 1.0 if self.eq.stable else -1.0
            lim = _limits(f, z0, sign, eqs, ref, win, cfg)
            labels[(lim.outcome != BUDGET)] = OUTSIDE
            inside = lim.outcome == ref
            labels[inside] = IN_BASIN
            sweep[inside] = lim.sweep[inside]

        else:
            fw = _limits(f, z0, 1.0, eqs, ref, win, cfg)
            ends = (ref,) if self.kind == RegionKind.ELLIPTIC_SECTOR else (ref, self.partner_idx)
            todo = np.nonzero(np.isin(fw.outcome, ends))[0]
            bw_out = np.full(z0.shape, BUDGET)
            far = fw.far.copy()
            if todo.size:
                bw = _limits(f, z0[todo], -1.0, eqs, ref, win, cfg)
                bw_out[todo] = bw.outcome
                a = self.eq.location
                pick = np.abs(bw.far - a) > np.abs(fw.far[todo] - a)
                far[todo[pick]] = bw.far[pick]
            bad_f = (fw.outcome != BUDGET) & ~np.isin(fw.outcome, ends)
            bad_b = (bw_out != BUDGET) & ~np.isin(bw_out, ends)
            labels[bad_f | bad_b] = OUTSIDE
            if self.kind == RegionKind.ELLIPTIC_SECTOR:
                inside = (fw.outcome == ref) & (bw_out == ref)
                labels[inside] = IN_SECTOR
                sector[inside] = _sector_index(np.angle(far[inside] - self.eq.location),
                                               self.eq.sector_directions)
            else:
                p = self.partner_idx
                inside = ((fw.outcome == ref) & (bw_out == p)) | ((fw.outcome == p) & (bw_out == ref))
                labels[inside] = IN_BASIN
        return labels, sector, sweep


# ---------- grids ----------

@dataclass
class BasinGrid:
    window: Window
    resolution: Tuple[int, int]          # (nx, ny)
    equilibrium: Equilibrium
    region_kind: RegionKind
    labels: np.ndarray                   # (ny, nx)
    sector: np.ndarray
    sweep: np.ndarray
    equilibria: Tuple[Equilibrium, ...]
    classifier: PointClassifier = field(repr=False)
    partner: Optional[Equilibrium] = None
    eq_cells: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    @property
    def cell_size(self) -> Tuple[float, float]:
        nx, ny = self.resolution
        return self.window.width / nx, self.window.height / ny

    def points(self) -> np.ndarray:
        return cell_centers(self.window, self.resolution)

    def region_mask(self, sector: Optional[int] = None) -> np.ndarray:
        if self.region_kind == RegionKind.ELLIPTIC_SECTOR:
            m = self.labels == IN_SECTOR
            return m & (self.sector == sector) if sector is not None else m
        return self.labels == IN_BASIN

    def counts(self) -> Dict[str, int]:
        return {LABEL_NAMES[k]: int((self.labels == k).sum()) for k in LABEL_NAMES}


def cell_centers(window: Window, resolution: Tuple[int, int]) -> np.ndarray:
    nx, ny = resolution
    xs = window.xmin + (np.arange(nx) + 0.5) * window.width / nx
    ys = window.ymin + (np.arange(ny) + 0.5) * window.height / ny
    return xs[None, :] + 1j * ys[:, None]


def _classify_rows(classifier: PointClassifier, pts: np.ndarray, cfg: Dict):
    ny, nx = pts.shape
    step = max(1, int(cfg["chunk_rows"]))
    chunks = [(r, pts[r:r + step]) for r in range(0, ny, step)]
    labels = np.empty((ny, nx), dtype=np.int8)
    sector = np.empty((ny, nx), dtype=int)
    sweep = np.empty((ny, nx))
    with ThreadPoolExecutor(max_workers=worker_count(cfg)) as pool:
        results = list(pool.map(lambda c: classifier(c[1]), chunks))
    for (r, chunk), (lab, sec, sw) in zip(chunks, results):
        rows = chunk.shape[0]
        labels[r:r + rows] = lab.reshape(rows, nx)
        sector[r:r + rows] = sec.reshape(rows, nx)
        sweep[r:r + rows] = sw.reshape(rows, nx)
    return labels, sector, sweep


def compute_basin(f: FieldAst, a: Equilibrium, window: Window, resolution: Tuple[int, int] = (64, 64),
                  cfg: Optional[Dict] = None, equilibria: Optional[Sequence[Equilibrium]] = None,
                  region: Optional[RegionKind] = None, partner: Optional[Equilibrium] = None,
                  logger: Callable = _noop) -> BasinGrid:
    """Label every cell center of the window by its fate relative to `a`."""
    cfg = with_defaults(cfg)
    if not window.contains(a.location):
        raise ConfigError(f"equilibrium {a.location!r} is outside the window {window.as_tuple()}")
    if equilibria is None:
        equilibria = find_equilibria(f, window, cfg, logger)
    kind = region or default_region(a)
    if kind == RegionKind.HETEROCLINIC and partner is None:
        raise ConfigError("heteroclinic region needs a partner equilibrium")
    classifier = PointClassifier(f, a, kind, equilibria, window, cfg, partner)
    pts = cell_centers(window, resolution)
    labels, sector, sweep = _classify_rows(classifier, pts, cfg)

    nx, ny = resolution
    eq_cells = {}
    for e in equilibria:
        if window.contains(e.location):
            ix = min(nx - 1, int((e.location.real - window.xmin) / window.width * nx))
            iy = min(ny - 1, int((e.location.imag - window.ymin) / window.height * ny))
            labels[iy, ix] = EQUILIBRIUM
            eq_cells[e.id] = (iy, ix)
    grid = BasinGrid(window, tuple(resolution), a, kind, labels, sector, sweep,
                     tuple(equilibria), classifier, partner, eq_cells)
    logger({"type": "info", "op": "compute_basin", "msg": "grid classified",
            "equilibrium": a.id, "region": kind.value, **grid.counts()})
    return grid


# ---------- boundary extraction ----------

@dataclass
class BoundarySeeds:
    seeds: List[complex]
    on_boundary: Tuple[int, ...]         # equilibrium ids whose cell touches the region
    label_pairs: int = 0
    cut_pairs: int = 0

    def __iter__(self):
        return iter(self.seeds)

    def __len__(self):
        return len(self.seeds)


def extract_boundary(grid: BasinGrid, sector: Optional[int] = None, cfg: Optional[Dict] = None,
                     logger: Callable = _noop) -> BoundarySeeds:
    """
    Seeds on the region's boundary orbits.

    Brackets are adjacent cells with one inside and one outside the region,
    plus adjacent inside cells whose swept angles around the equilibrium
    disagree by more than pi (a slit: both sides belong to the basin).
    Each bracket is bisected until it is shorter than seed_tol.
    """
    cfg = with_defaults(cfg if cfg is not None else grid.classifier.cfg)
    region = grid.region_mask(sector).ravel()
    if not region.any():
        raise EmptyBoundary("region has no cells")
    ny, nx = grid.labels.shape
    pts = grid.points().ravel()
    labels = grid.labels.ravel()
    sweep = grid.sweep.ravel()
    a = grid.equilibrium.location
    cell_id = {iy * nx + ix: eid for eid, (iy, ix) in grid.eq_cells.items()}
    own_interior = grid.region_kind in (RegionKind.CENTER_BASIN, RegionKind.NODE_FOCUS_BASIN)
    diag = math.hypot(*grid.cell_size)

    idx = np.arange(ny * nx).reshape(ny, nx)
    on_boundary: Set[int] = set()
    pairs_in, pairs_out, cut = [], [], []
    for dy, dx in ((0, 1), (1, 0)):
        P = idx[: ny - dy, : nx - dx].ravel()
        Q = idx[dy:, dx:].ravel()
        eqp, eqq = labels[P] == EQUILIBRIUM, labels[Q] == EQUILIBRIUM
        for cell in np.concatenate([Q[region[P] & eqq], P[region[Q] & eqp]]):
            eid = cell_id.get(int(cell))
            if eid is not None and not (own_interior and eid == grid.equilibrium.id):
                on_boundary.add(eid)
        plain = ~eqp & ~eqq
        diff = plain & (region[P] != region[Q])
        pairs_in.append(np.where(region[P], P, Q)[diff])
        pairs_out.append(np.where(region[P], Q, P)[diff])
        cut.append(np.zeros(int(diff.sum()), dtype=bool))
        if grid.region_kind == RegionKind.NODE_FOCUS_BASIN:
            both = plain & region[P] & region[Q]
            far_enough = (np.abs(pts[P] - a) > 2 * diag) & (np.abs(pts[Q] - a) > 2 * diag)
            with np.errstate(all="ignore"):
                delta = np.angle((pts[Q] - a) / (pts[P] - a))
                jump = np.abs(delta + sweep[Q] - sweep[P]) > math.pi
            c = both & far_enough & np.isfinite(sweep[P]) & np.isfinite(sweep[Q]) & jump
            pairs_in.append(P[c])
            pairs_out.append(Q[c])
            cut.append(np.ones(int(c.sum()), dtype=bool))

    A_idx = np.concatenate(pairs_in)
    B_idx = np.concatenate(pairs_out)
    is_cut = np.concatenate(cut)
    if A_idx.size == 0 and not on_boundary:
        raise EmptyBoundary("no differing adjacency: the region fills the window")

    n_label, n_cut = int((~is_cut).sum()), int(is_cut.sum())
    if A_idx.size > cfg["max_boundary_pairs"]:
        order = np.lexsort((B_idx, A_idx))
        keep = order[np.unique(np.linspace(0, A_idx.size - 1, int(cfg["max_boundary_pairs"])).round().astype(int))]
        A_idx, B_idx, is_cut = A_idx[keep], B_idx[keep], is_cut[keep]

    A, B = pts[A_idx].copy(), pts[B_idx].copy()
    SA = sweep[A_idx].copy()
    for _ in range(64):
        open_ = np.abs(A - B) > cfg["seed_tol"]
        if not open_.any():
            break
        o = np.nonzero(open_)[0]
        M = 0.5 * (A[o] + B[o])
        lab, sec, sw = grid.classifier(M)
        if grid.region_kind == RegionKind.ELLIPTIC_SECTOR:
            inside = (lab == IN_SECTOR) & ((sec == sector) if sector is not None else True)
        else:
            inside = lab == IN_BASIN
        with np.errstate(all="ignore"):
            cont = np.abs(np.angle((M - a) / (A[o] - a)) + sw - SA[o]) <= math.pi
        same = inside & (~is_cut[o] | cont)
        A[o[same]] = M[same]
        SA[o[same]] = sw[same]
        B[o[~same]] = M[~same]

    seeds = [complex(s) for s in 0.5 * (A + B)]
    logger({"type": "info", "op": "extract_boundary", "msg": "boundary seeds refined",
            "seeds": len(seeds), "label_pairs": n_label, "cut_pairs": n_cut,
            "on_boundary": sorted(on_boundary)})
    return BoundarySeeds(seeds, tuple(sorted(on_boundary)), n_label, n_cut)


# ---------- tracing ----------

@dataclass
class SeparatrixRecord:
    id: int
    seed: complex
    orbit: OrbitTrace
    side: str
    transit_time: Optional[float] = None
    blow_up_times: Optional[Tuple[Optional[float], Optional[float]]] = None
    reason: Optional[str] = None
    attached: Tuple[int, ...] = ()

    @property
    def is_separatrix(self) -> bool:
        return self.side in SEPARATRIX_SIDES

    def leaves(self, eq_id: int) -> bool:
        """Backward limit is the equilibrium (the orbit leaves it)."""
        return bool(self.orbit.backward_fate and self.orbit.backward_fate.converges_to(eq_id))

    def enters(self, eq_id: int) -> bool:
        return bool(self.orbit.forward_fate and self.orbit.forward_fate.converges_to(eq_id))

    def distance_to(self, p: complex, equilibria: Dict[int, complex]) -> float:
        """Distance from p to the orbit, closing converging ends at their equilibrium."""
        d = self.orbit.distance_to(p)
        for eid in self.attached:
            b = equilibria.get(eid)
            if b is None:
                continue
            end = self.orbit.z[-1] if self.enters(eid) else self.orbit.z[0]
            seg = end - b
            s = 0.0 if seg == 0 else min(1.0, max(0.0, ((p - b) * seg.conjugate()).real / abs(seg) ** 2))
            d = min(d, abs(b + s * seg - p))
        return d

    def as_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "side": self.side, "transit_time": self.transit_time,
                "blow_up_times": list(self.blow_up_times) if self.blow_up_times else None,
                "seed": self.seed, "reason": self.reason, "attached": list(self.attached),
                "forward_fate": self.orbit.forward_fate.as_dict() if self.orbit.forward_fate else None,
                "backward_fate": self.orbit.backward_fate.as_dict() if self.orbit.backward_fate else None}


def classify_side(orbit: OrbitTrace) -> Tuple[str, Optional[float], Optional[str]]:
    """(side, transit time for double-sided orbits, undetermined reason)."""
    fw, bw = orbit.forward_fate, orbit.backward_fate
    up, down = fw.is_blow_up, bw.is_blow_up
    if up and down:
        return DOUBLE, fw.t_star - bw.t_star, None
    if up:
        return POSITIVE, None, None
    if down:
        return NEGATIVE, None, None
    und = [x.reason for x in (fw, bw) if x.kind == FateKind.UNDETERMINED]
    return (UNDETERMINED, None, ",".join(und)) if und else (NONE, None, None)


def trace_and_classify(f: FieldAst, seeds: Sequence[complex], equilibria: Sequence[Equilibrium],
                       window: Window, cfg: Optional[Dict] = None, logger: Callable = _noop,
                       skip_radius: float = 0.0, on_boundary: Optional[Set[int]] = None,
                       records: Optional[List[SeparatrixRecord]] = None) -> List[SeparatrixRecord]:
    """
    Trace each seed both ways and classify its side; seeds lying on an
    already traced orbit (within dedupe_tol) are merged into it.
    `records` may carry earlier records to deduplicate against.
    """
    cfg = with_defaults(cfg)
    out = list(records or [])
    locs = {e.id: e.location for e in equilibria}
    for s in seeds:
        s = complex(s)
        near = [e for e in equilibria if abs(s - e.location) <= max(skip_radius, cfg["capture_radius"])]
        if near:
            if on_boundary is not None:
                on_boundary.update(e.id for e in near)
            continue
        if any(r.distance_to(s, locs) <= cfg["dedupe_tol"] for r in out):
            continue
        try:
            orbit = trace_orbit(f, s, cfg, equilibria, window, logger=logger)
        except StartAtEquilibrium:
            continue
        side, transit, reason = classify_side(orbit)
        attached = tuple(sorted({x.equilibrium for x in (orbit.forward_fate, orbit.backward_fate)
                                 if x.kind == FateKind.CONVERGES_TO and x.equilibrium is not None}))
        blow = None
        if orbit.forward_fate.is_blow_up or orbit.backward_fate.is_blow_up:
            blow = (orbit.backward_fate.t_star, orbit.forward_fate.t_star)
        rec = SeparatrixRecord(len(out), s, orbit, side, transit, blow, reason, attached)
        out.append(rec)
        logger({"type": "info", "op": "trace_and_classify", "msg": "boundary orbit traced",
                "id": rec.id, "side": side, "seed": s})
    return out[len(records or []):] if records is not None else out


# ---------- components ----------

@dataclass
class PathComponent:
    type: str                            # "(i)".."(iv)" or "other"
    orbit_ids: Tuple[int, ...]
    attached_equilibria: Tuple[int, ...]
    theorem_tag: Optional[str] = None    # (A)/(B)/(C) for node and focus basins

    def as_dict(self) -> Dict[str, Any]:
        return {"type": self.type, "orbit_ids": list(self.orbit_ids),
                "attached_equilibria": list(self.attached_equilibria), "theorem_tag": self.theorem_tag}


_NODE_TAGS = {"(i)": "(A)", "(iii)": "(B)", "(iv)": "(C)"}


def assemble_components(records: Sequence[SeparatrixRecord], equilibria: Sequence[int] = (),
                        region_kind: Optional[RegionKind] = None) -> List[PathComponent]:
    """
    Group boundary orbits and equilibria into path components. An orbit
    attaches to b when one of its ends converges to b; `equilibria` lists
    the ids seen on the boundary directly.
    """
    parent: Dict[Tuple[str, int], Tuple[str, int]] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(x, y):
        rx, ry = find(x), find(y)
        if rx != ry:
            parent[max(rx, ry)] = min(rx, ry)

    for r in records:
        find(("r", r.id))
        for b in r.attached:
            union(("e", b), ("r", r.id))
    for b in equilibria:
        find(("e", b))

    groups: Dict[Tuple[str, int], List[Tuple[str, int]]] = {}
    for x in list(parent):
        groups.setdefault(find(x), []).append(x)

    by_id = {r.id: r for r in records}
    out = []
    for members in groups.values():
        orbits = tuple(sorted(i for k, i in members if k == "r"))
        eqs = tuple(sorted(i for k, i in members if k == "e"))
        for b in eqs:
            n = sum(1 for i in orbits if b in by_id[i].attached)
            if n > 2:
                raise MalformedComponent(f"{n} orbits attach to equilibrium {b} in one component")
        shape = (len(orbits), len(eqs))
        kind = {(1, 0): "(i)", (0, 1): "(ii)", (1, 1): "(iii)", (2, 1): "(iv)"}.get(shape, "other")
        tag = _NODE_TAGS.get(kind) if region_kind == RegionKind.NODE_FOCUS_BASIN else None
        out.append(PathComponent(kind, orbits, eqs, tag))
    out.sort(key=lambda c: (c.orbit_ids[:1] or (10 ** 9,), c.attached_equilibria))
    return out


# ---------- reports and verdicts ----------

@dataclass
class Verdict:
    name: str
    passed: bool
    measured: Any
    bound: Any = None
    note: str = ""

    def as_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "pass": self.passed, "measured": self.measured,
                "bound": self.bound, "note": self.note}


@dataclass
class ConfigurationReport:
    field_source: str
    window: Window
    equilibrium: Equilibrium
    region_kind: RegionKind
    records: List[SeparatrixRecord]
    components: List[PathComponent]
    on_boundary: Tuple[int, ...] = ()
    sector_index: Optional[int] = None
    partner: Optional[Equilibrium] = None
    verdicts: List[Verdict] = field(default_factory=list)
    empty_boundary: bool = False
    grid: Optional[BasinGrid] = field(default=None, repr=False)

    @property
    def separatrices(self) -> List[SeparatrixRecord]:
        return [r for r in self.records if r.is_separatrix]

    def gamma1(self) -> List[SeparatrixRecord]:
        return [r for r in self.records if r.leaves(self.equilibrium.id)]

    def gamma2(self) -> List[SeparatrixRecord]:
        return [r for r in self.records if r.enters(self.equilibrium.id)]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "field_source": self.field_source,
            "window": list(self.window.as_tuple()),
            "equilibrium": self.equilibrium.as_dict(),
            "region_kind": self.region_kind.value,
            "sector_index": self.sector_index,
            "partner": None if self.partner is None else self.partner.id,
            "empty_boundary": self.empty_boundary,
            "on_boundary": list(self.on_boundary),
            "components": [c.as_dict() for c in self.components],
            "separatrices": [r.as_dict() for r in self.records],
            "theorem_verdicts": [v.as_dict() for v in self.verdicts],
        }


def verify_theorems(report: ConfigurationReport) -> List[Verdict]:
    a = report.equilibrium
    recs = report.records
    out: List[Verdict] = []
    if report.region_kind == RegionKind.CENTER_BASIN:
        doubles = [r for r in recs if r.side == DOUBLE]
        out.append(Verdict("center_all_double_sided", len(doubles) == len(recs), len(doubles), len(recs),
                           "every boundary orbit of a center basin is a double-sided separatrix"))
        total = float(sum(r.transit_time for r in doubles))
        bound = a.period * (1 + 1e-3)
        out.append(Verdict("center_transit_budget", total <= bound, total, bound,
                           "sum of transit times is bounded by the period"))
    elif report.region_kind == RegionKind.NODE_FOCUS_BASIN:
        expected = POSITIVE if a.stable else NEGATIVE
        seps = report.separatrices
        good = [r for r in seps if r.side == expected]
        out.append(Verdict("node_side_matches_stability", len(good) == len(seps), len(good), len(seps),
                           f"{'stable' if a.stable else 'unstable'} equilibrium expects {expected} separatrices"))
        one_sided = [r for r in seps if r.side != DOUBLE]
        out.append(Verdict("node_one_sided_blow_up", len(one_sided) == len(seps), len(one_sided), len(seps),
                           "a node/focus basin has no double-sided separatrix on its boundary"))
    elif report.region_kind == RegionKind.ELLIPTIC_SECTOR:
        g1, g2 = report.gamma1(), report.gamma2()
        out.append(Verdict("sector_gamma1_positive", len(g1) == 1 and g1[0].side == POSITIVE,
                           [r.side for r in g1], POSITIVE, "orbit leaving the equilibrium"))
        out.append(Verdict("sector_gamma2_negative", len(g2) == 1 and g2[0].side == NEGATIVE,
                           [r.side for r in g2], NEGATIVE, "orbit entering the equilibrium"))
        ids = {r.id for r in g1 + g2}
        rest = [r for r in recs if r.id not in ids]
        out.append(Verdict("sector_others_double_sided", all(r.side == DOUBLE for r in rest),
                           sum(1 for r in rest if r.side == DOUBLE), len(rest)))
    return out


# ---------- sectors ----------

@dataclass
class SectorPair:
    sector: int
    directions: Tuple[float, float]
    gamma1: SeparatrixRecord
    gamma2: SeparatrixRecord


def _arc_boundary(classifier: PointClassifier, a: complex, rho: float, inside_angle: float,
                  outside_angle: float, sector: int, tol: float) -> complex:
    lo, hi = inside_angle, outside_angle
    while abs(hi - lo) * rho > tol:
        mid = 0.5 * (lo + hi)
        lab, sec, _ = classifier(np.array([a + rho * np.exp(1j * mid)]))
        if lab[0] == IN_SECTOR and sec[0] == sector:
            lo = mid
        else:
            hi = mid
    return a + rho * np.exp(1j * 0.5 * (lo + hi))


def sector_pair(f: FieldAst, a: Equilibrium, window: Window, cfg: Optional[Dict] = None,
                equilibria: Optional[Sequence[Equilibrium]] = None,
                logger: Callable = _noop) -> List[SectorPair]:
    """
    For each sector between adjacent definite directions, the orbit leaving a
    (Gamma_1) and the orbit entering a (Gamma_2) that bound it. Seeds come
    from bisection on a small arc around a across each direction.
    """
    cfg = with_defaults(cfg)
    if not a.is_multiple:
        raise SectorSeedFailure(f"{a.location!r} is not a multiple equilibrium")
    if equilibria is None:
        equilibria = find_equilibria(f, window, cfg, logger)
    classifier = PointClassifier(f, a, RegionKind.ELLIPTIC_SECTOR, equilibria, window, cfg)
    th = list(a.sector_directions)
    n = len(th)
    half = math.pi / (2 * (a.order - 1))
    rho = 0.5 * cfg["multiple_capture_frac"] * gap(a, equilibria, window)
    out = []
    known: List[SeparatrixRecord] = []
    for k in range(n):
        lo_dir, hi_dir = th[k], th[(k + 1) % n] + (TWO_PI if k == n - 1 else 0.0)
        mid = lo_dir + half
        lab, sec, _ = classifier(np.array([a.location + rho * np.exp(1j * mid)]))
        if lab[0] != IN_SECTOR or sec[0] != k:
            raise SectorSeedFailure(f"no homoclinic point in sector {k} of {a.location!r} at radius {rho:.3g}")
        seeds = [_arc_boundary(classifier, a.location, rho, mid, lo_dir - half, k, cfg["seed_tol"]),
                 _arc_boundary(classifier, a.location, rho, mid, hi_dir + half, k, cfg["seed_tol"])]
        new = trace_and_classify(f, seeds, equilibria, window, cfg, logger, records=known)
        known.extend(new)
        cands = [r for r in known if r.distance_to(seeds[0], {a.id: a.location}) <= cfg["dedupe_tol"]
                 or r.distance_to(seeds[1], {a.id: a.location}) <= cfg["dedupe_tol"]]
        g1 = [r for r in cands if r.leaves(a.id)]
        g2 = [r for r in cands if r.enters(a.id)]
        if not g1 or not g2:
            raise SectorSeedFailure(f"sector {k} of {a.location!r}: boundary rays do not leave and enter a")
        out.append(SectorPair(k, (lo_dir % TWO_PI, hi_dir % TWO_PI), g1[0], g2[0]))
    return out


# ---------- pipeline ----------

def build_report(f: FieldAst, grid: BasinGrid, cfg: Optional[Dict] = None, sector: Optional[int] = None,
                 first_records: Sequence[SeparatrixRecord] = (), logger: Callable = _noop) -> ConfigurationReport:
    """Boundary seeds -> traced records -> components -> verdicts for one region of a grid."""
    cfg = with_defaults(cfg if cfg is not None else grid.classifier.cfg)
    empty = False
    on_boundary: Set[int] = set()
    try:
        seeds = extract_boundary(grid, sector, cfg, logger)
        on_boundary.update(seeds.on_boundary)
        seed_list = list(seeds)
    except EmptyBoundary as e:
        logger({"type": "info", "op": "extract_boundary", "msg": f"empty boundary: {e}"})
        empty, seed_list = True, []
    records = [SeparatrixRecord(i, r.seed, r.orbit, r.side, r.transit_time, r.blow_up_times,
                                r.reason, r.attached) for i, r in enumerate(first_records)]
    skip = 1.5 * math.hypot(*grid.cell_size)
    records += trace_and_classify(f, seed_list, grid.equilibria, grid.window, cfg, logger,
                                  skip_radius=skip, on_boundary=on_boundary, records=records)
    if grid.region_kind in (RegionKind.CENTER_BASIN, RegionKind.NODE_FOCUS_BASIN):
        on_boundary.discard(grid.equilibrium.id)
    components = assemble_components(records, sorted(on_boundary), grid.region_kind)
    report = ConfigurationReport(f.source, grid.window, grid.equilibrium, grid.region_kind, records,
                                 components, tuple(sorted(on_boundary)), sector, grid.partner,
                                 empty_boundary=empty, grid=grid)
    report.verdicts = verify_theorems(report)
    return report


def analyze_equilibrium(f: FieldAst, eq: Equilibrium, window: Window, resolution: Tuple[int, int],
                        cfg: Optional[Dict] = None, equilibria: Optional[Sequence[Equilibrium]] = None,
                        logger: Callable = _noop) -> List[ConfigurationReport]:
    """One report per basin, or one per elliptic sector for a multiple equilibrium."""
    cfg = with_defaults(cfg)
    if equilibria is None:
        equilibria = find_equilibria(f, window, cfg, logger)
    grid = compute_basin(f, eq, window, resolution, cfg, equilibria, logger=logger)
    if not eq.is_multiple:
        return [build_report(f, grid, cfg, logger=logger)]
    pairs = sector_pair(f, eq, window, cfg, equilibria, logger)
    return [build_report(f, grid, cfg, sector=p.sector, first_records=[p.gamma1, p.gamma2], logger=logger)
            for p in pairs]


def analyze(f: FieldAst, window: Window, resolution: Tuple[int, int] = (64, 64), cfg: Optional[Dict] = None,
            equilibria: Optional[Sequence[Equilibrium]] = None, logger: Callable = _noop) -> List[ConfigurationReport]:
    cfg = with_defaults(cfg)
    if equilibria is None:
        equilibria = find_equilibria(f, window, cfg, logger)
    reports = []
    for eq in equilibria:
        reports.extend(analyze_equilibrium(f, eq, window, resolution, cfg, equilibria, logger))
    return reports


def distinct_separatrices(reports: Sequence[ConfigurationReport], tol: float = 1e-4) -> List[SeparatrixRecord]:
    """Separatrix records across reports with duplicates (same orbit) removed."""
    out: List[SeparatrixRecord] = []
    for rep in reports:
        locs = {rep.equilibrium.id: rep.equilibrium.location}
        for r in rep.separatrices:
            if not any(o.distance_to(r.seed, locs) <= tol or r.distance_to(o.seed, locs) <= tol for o in out):
                out.append(r)
    return out


def configuration_summary(reports: Sequence[ConfigurationReport]) -> Dict[str, Any]:
    """Counts over distinct separatrices; a double-sided one blows up twice."""
    seps = distinct_separatrices(reports)
    sides = {s: sum(1 for r in seps if r.side == s) for s in SEPARATRIX_SIDES}
    through = []
    for r in seps:
        if r.side == DOUBLE:
            through.append({"id": r.id, "seed": r.seed, "transit_time": r.transit_time})
    return {
        "reports": len(reports),
        "separatrices": len(seps),
        "one_sided": sides[POSITIVE] + sides[NEGATIVE],
        "positive": sides[POSITIVE],
        "negative": sides[NEGATIVE],
        "double": sides[DOUBLE],
        "blow_ups": sides[POSITIVE] + sides[NEGATIVE] + 2 * sides[DOUBLE],
        "double_sided": through,
        "verdicts_failed": [v.name for rep in reports for v in rep.verdicts if not v.passed],
    }


def heteroclinic_region_probe(f: FieldAst, a: Equilibrium, b: Optional[Equilibrium], window: Window,
                              resolution: Tuple[int, int] = (64, 64), cfg: Optional[Dict] = None,
                              equilibria: Optional[Sequence[Equilibrium]] = None,
                              logger: Callable = _noop) -> ConfigurationReport:
    """
    Boundary orbits of the region of orbits connecting a and b, traced with
    blow-up detection both ways. Measures only; no verdicts are attached.
    """
    cfg = with_defaults(cfg)
    if equilibria is None:
        equilibria = find_equilibria(f, window, cfg, logger)
    if b is None:
        return ConfigurationReport(f.source, window, a, RegionKind.HETEROCLINIC, [], [], empty_boundary=True)
    grid = compute_basin(f, a, window, resolution, cfg, equilibria, RegionKind.HETEROCLINIC, b, logger)
    if not grid.region_mask().any():
        logger({"type": "info", "op": "heteroclinic_region_probe", "msg": "no heteroclinic cells",
                "pair": [a.id, b.id]})
        return ConfigurationReport(f.source, window, a, RegionKind.HETEROCLINIC, [], [], partner=b,
                                   empty_boundary=True, grid=grid)
    report = build_report(f, grid, cfg, logger=logger)
    report.verdicts = []
    return report
