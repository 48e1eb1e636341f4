# holoflow/render.py
"""
Phase portraits as plain SVG.

Layers, bottom to top: basin and sector fill, orbits, separatrices,
equilibria, definite-direction rays. Coordinates are printed with six
decimals and elements are emitted in a fixed order, so equal inputs give
byte-identical documents.
"""
import math
from html import escape
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from .config import Window
from .equilibria import Equilibrium
from .integrator import OrbitTrace
from .separatrix import (IN_BASIN, IN_SECTOR, UNRESOLVED, BasinGrid,
                         SeparatrixRecord)

DEFAULT_STYLE: Dict[str, Any] = {
    "width": 800,
    "basin_colors": ["#cfe8cf", "#cfdcf2", "#f6e3c6", "#e8d0ec", "#d6efef", "#f2d0d0"],
    "sector_colors": ["#fff2b3", "#ffd9b3", "#e6ccff", "#ccf2ff"],
    "unresolved_color": "#bbbbbb",
    "orbit_color": "#555555",
    "side_colors": {"positive": "#d62728", "negative": "#2ca02c", "double": "#9467bd",
                    "none": "#7f7f7f", "undetermined": "#bcbd22"},
    "equilibrium_radius": 4.0,
    "ray_frac": 0.08,
    "per_step": 2,
}


def _f(v: float) -> str:
    return "%.6f" % v


class _Canvas:
    def __init__(self, window: Window, width: float):
        self.w = window
        self.width = float(width)
        self.scale = self.width / window.width
        self.height = window.height * self.scale

    def xy(self, z: complex):
        return (z.real - self.w.xmin) * self.scale, (self.w.ymax - z.imag) * self.scale


def _polyline_runs(zz: np.ndarray, window: Window) -> List[np.ndarray]:
    """Pieces of the polyline that stay inside a dilated window; long jumps are cut."""
    box = window.dilate(1.0)
    inside = (zz.real >= box.xmin) & (zz.real <= box.xmax) & (zz.imag >= box.ymin) & (zz.imag <= box.ymax)
    runs, start = [], None
    for i, ok in enumerate(inside):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            runs.append(zz[start:i])
            start = None
    if start is not None:
        runs.append(zz[start:])
    return [r for r in runs if len(r) >= 2]


def _path(canvas: _Canvas, zz: np.ndarray) -> str:
    pts = [canvas.xy(complex(z)) for z in zz]
    return "M" + " L".join(f"{_f(x)},{_f(y)}" for x, y in pts)


def _fill_layer(canvas: _Canvas, grids: Sequence[BasinGrid], style: Dict) -> List[str]:
    out = []
    for g_i, grid in enumerate(grids):
        ny, nx = grid.labels.shape
        dx, dy = grid.cell_size
        basin = style["basin_colors"][grid.equilibrium.id % len(style["basin_colors"])]
        for iy in range(ny):
            row_lab, row_sec = grid.labels[iy], grid.sector[iy]
            ix = 0
            while ix < nx:
                lab, sec = int(row_lab[ix]), int(row_sec[ix])
                j = ix
                while j + 1 < nx and row_lab[j + 1] == lab and row_sec[j + 1] == sec:
                    j += 1
                color = None
                if lab == IN_BASIN:
                    color = basin
                elif lab == IN_SECTOR:
                    color = style["sector_colors"][sec % len(style["sector_colors"])]
                elif lab == UNRESOLVED:
                    color = style["unresolved_color"]
                if color is not None:
                    x0, y1 = canvas.xy(complex(grid.window.xmin + ix * dx, grid.window.ymin + (iy + 1) * dy))
                    out.append(f'<rect class="cell g{g_i}" x="{_f(x0)}" y="{_f(y1)}" '
                               f'width="{_f((j - ix + 1) * dx * canvas.scale)}" height="{_f(dy * canvas.scale)}" '
                               f'fill="{color}"/>')
                ix = j + 1
    return out


def render_svg(grids: Iterable[BasinGrid], records: Sequence[SeparatrixRecord],
               equilibria: Sequence[Equilibrium], window: Optional[Window] = None,
               style: Optional[Dict] = None, orbits: Sequence[OrbitTrace] = ()) -> str:
    st = dict(DEFAULT_STYLE)
    st.update(style or {})
    grids = list(grids or [])
    if window is None:
        window = grids[0].window if grids else Window.around([e.location for e in equilibria])
    cv = _Canvas(window, st["width"])

    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(cv.width)}" height="{_f(cv.height)}" '
             f'viewBox="0 0 {_f(cv.width)} {_f(cv.height)}">',
             '<style>.orbit{fill:none;stroke-width:0.8}.separatrix{fill:none;stroke-width:2}'
             '.ray{stroke-width:1;stroke-dasharray:4 2}</style>']

    lines.append('<g id="fill">')
    lines += _fill_layer(cv, grids, st)
    lines.append("</g>")

    lines.append('<g id="orbits">')
    for tr in orbits:
        _, zz = tr.dense(st["per_step"])
        for run in _polyline_runs(zz, window):
            lines.append(f'<path class="orbit" stroke="{st["orbit_color"]}" d="{_path(cv, run)}"/>')
    lines.append("</g>")

    if records:
        lines.append('<g id="separatrices">')
        for r in sorted(records, key=lambda r: r.id):
            color = st["side_colors"].get(r.side, "#000000")
            _, zz = r.orbit.dense(st["per_step"])
            for run in _polyline_runs(zz, window):
                lines.append(f'<path class="separatrix {escape(r.side)}" data-id="{r.id}" stroke="{color}" '
                             f'd="{_path(cv, run)}"/>')
        lines.append("</g>")

    lines.append('<g id="equilibria">')
    for e in sorted(equilibria, key=lambda e: e.id):
        x, y = cv.xy(e.location)
        lines.append(f'<circle class="equilibrium {e.eq_class.value}" data-id="{e.id}" cx="{_f(x)}" cy="{_f(y)}" '
                     f'r="{_f(st["equilibrium_radius"])}" fill="#000000"/>')
    lines.append("</g>")

    rays = [e for e in sorted(equilibria, key=lambda e: e.id) if e.is_multiple and e.sector_directions]
    if rays:
        lines.append('<g id="directions">')
        length = st["ray_frac"] * window.diameter
        for e in rays:
            x0, y0 = cv.xy(e.location)
            for th, out in zip(e.sector_directions, e.outgoing()):
                x1, y1 = cv.xy(e.location + length * complex(math.cos(th), math.sin(th)))
                kind = "outgoing" if out else "incoming"
                lines.append(f'<line class="ray {kind}" x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" '
                             f'stroke="#000000"/>')
        lines.append("</g>")

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
