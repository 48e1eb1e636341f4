# holoflow/config.py
import json
import os
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

from .errors import ConfigError

# Load environment variables from .env file
load_dotenv()

SUBCOMMANDS = ("equilibria", "portrait", "orbit", "transit", "separatrices", "verify", "sweep")

# Every numerical knob in one place; functions fill missing keys with setdefault.
DEFAULTS: Dict[str, Any] = {
    # integrator
    "rtol": 1e-10,
    "atol": 1e-13,
    "step_bound_c": 0.1,              # h <= c*max(|z|, length_scale)/|F(z)|
    "escape_radius": None,            # first blow-up decision radius; None -> 1e3 * window diameter
    "extrap_radius": 1e8,
    "t_max": 1e6,
    "max_steps": 200000,
    "capture_radius": 1e-8,
    "capture_residual": 1e-8,
    "periodic_tol": 1e-8,
    "blowup_ratio_max": 0.95,         # dyadic time increments must contract below this
    "blowup_contractions": 3,
    "angle_tol": 1e-3,                # rad, tangency guard for crossings
    "local_model_tol": 0.05,          # |F - c w^m| <= tol |c w^m| inside the capture disk
    "multiple_capture_frac": 0.1,     # local disk radius as a fraction of the gap to the next zero
    "model_capture_time_frac": 1e-2,  # multiple zeros: disk shrinks until the model approach costs this share of t_max

    # equilibria
    "zero_tol_rel": 1e-10,
    "deriv_tol_rel": 1e-8,
    "max_order": 12,
    "center_tol": 1e-10,
    "near_degenerate_tol": 1e-6,
    "newton_max_iter": 100,
    "cluster_radius": 1e-5,
    "min_subwindow_frac": 1e-3,

    # quadrature / transit
    "quad_abs_tol": 1e-12,
    "quad_rel_tol": 1e-10,
    "quad_max_depth": 40,
    "quad_order": 10,
    "pole_guard_rel": 1e-3,
    "period_check_rel": 1e-9,

    # separatrix / grid
    "grid_escape_radius": 1e12,
    "grid_rtol": 1e-9,
    "grid_capture_frac": 0.05,        # node capture disk as a fraction of the gap to the next zero
    "grid_t_max": 1e4,
    "grid_max_steps": 20000,
    "return_tol": 1e-6,
    "seed_tol": 1e-12,
    "max_boundary_pairs": 256,
    "dedupe_tol": 1e-5,
    "workers": None,                  # None -> HOLOFLOW_THREADS or cpu count
    "chunk_rows": 8,

    # telemetry
    "telemetry_console": True,
    "telemetry_db": False,
}


def with_defaults(cfg: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Copy of `cfg` with every missing knob filled from DEFAULTS (tolerance overrides flattened in)."""
    out = dict(cfg or {})
    for k, v in (out.pop("tolerances", None) or {}).items():
        out[k] = v
    for k, v in DEFAULTS.items():
        out.setdefault(k, v)
    return out


def worker_count(cfg: Dict[str, Any]) -> int:
    n = cfg.get("workers")
    if n is None:
        env = os.getenv("HOLOFLOW_THREADS")
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(n))


# ---------- run configuration ----------

@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle [xmin, xmax] x [ymin, ymax] in the phase plane."""
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ConfigError(f"malformed window {self.as_tuple()}")

    @classmethod
    def parse(cls, text: str) -> "Window":
        try:
            vals = [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"window must be xmin,ymin,xmax,ymax, got {text!r}")
        if len(vals) != 4:
            raise ConfigError(f"window must be xmin,ymin,xmax,ymax, got {text!r}")
        return cls(*vals)

    @classmethod
    def around(cls, points, factor: float = 4.0, min_half: float = 1.0) -> "Window":
        """Square window of `factor` times the bounding box of `points` (default sizing rule)."""
        pts = [complex(p) for p in points] or [0j]
        xs, ys = [p.real for p in pts], [p.imag for p in pts]
        cx, cy = 0.5 * (min(xs) + max(xs)), 0.5 * (min(ys) + max(ys))
        half = max(min_half, 0.5 * factor * max(max(xs) - min(xs), max(ys) - min(ys)))
        return cls(cx - half, cy - half, cx + half, cy + half)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def diameter(self) -> float:
        return abs(complex(self.width, self.height))

    @property
    def radius(self) -> float:
        """Largest |z| over the window."""
        return max(abs(complex(x, y)) for x in (self.xmin, self.xmax) for y in (self.ymin, self.ymax))

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))

    def contains(self, z: complex) -> bool:
        return self.xmin <= z.real <= self.xmax and self.ymin <= z.imag <= self.ymax

    def dilate(self, frac: float) -> "Window":
        dx, dy = 0.5 * frac * self.width, 0.5 * frac * self.height
        return Window(self.xmin - dx, self.ymin - dy, self.xmax + dx, self.ymax + dy)

    def corners(self) -> List[complex]:
        """Counter-clockwise corners starting bottom-left."""
        return [complex(self.xmin, self.ymin), complex(self.xmax, self.ymin),
                complex(self.xmax, self.ymax), complex(self.xmin, self.ymax)]


@dataclass
class RunConfig:
    field_source: str
    subcommand: str
    window: Optional[Window] = None
    resolution: Tuple[int, int] = (64, 64)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, Optional[str]] = field(default_factory=dict)   # json / svg / csv
    params: Dict[str, List[float]] = field(default_factory=dict)      # sweep placeholders
    options: Dict[str, Any] = field(default_factory=dict)             # per-subcommand extras
    db_path: Optional[str] = None
    strict: bool = False

    def validate(self) -> "RunConfig":
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if self.subcommand != "verify" and not self.field_source.strip():
            raise ConfigError("field expression is empty")
        nx, ny = self.resolution
        if nx < 16 or ny < 16:
            raise ConfigError(f"resolution must be at least 16 per axis, got {nx}x{ny}")
        if self.subcommand == "sweep" and not self.params:
            raise ConfigError("sweep needs --param NAME=v1,v2,...")
        return self

    def settings(self) -> Dict[str, Any]:
        return with_defaults({"tolerances": dict(self.tolerances)})


def load_config(p: str) -> Dict[str, Any]:
    with open(p, "r") as f:
        cfg = json.load(f)
    cfg["__path"] = os.path.abspath(p)
    if "field" not in cfg and cfg.get("subcommand") != "verify":
        raise ConfigError(f"{p}: config needs a 'field' entry")
    return cfg


def run_config_from_dict(cfg: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a JSON config (keys mirror the command-line flags)."""
    window = cfg.get("window")
    if isinstance(window, str):
        window = Window.parse(window)
    elif window is not None:
        window = Window(*[float(v) for v in window])
    params = {}
    for name, values in (cfg.get("params") or {}).items():
        params[name] = [float(v) for v in values]
    return RunConfig(
        field_source=cfg.get("field", ""),
        subcommand=cfg.get("subcommand", "separatrices"),
        window=window,
        resolution=tuple(cfg.get("resolution", (64, 64))),
        tolerances=dict(cfg.get("tolerances") or {}),
        outputs={k: cfg.get(k) for k in ("json", "svg", "csv")},
        params=params,
        options=dict(cfg.get("options") or {}),
        db_path=cfg.get("db"),
        strict=bool(cfg.get("strict", False)),
    )
