# holoflow/report.py
"""JSON reports and CSV dumps. Every file is written once, atomically."""
import json
import math
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Sequence

import numpy as np
import pandas as pd

from .equilibria import Equilibrium
from .integrator import OrbitTrace


def to_jsonable(obj: Any) -> Any:
    """Plain dict/list/str/float tree; complex numbers become {"re", "im"}, non-finite floats None."""
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [to_jsonable(v) for v in items]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(float(obj.real)), "im": to_jsonable(float(obj.imag))}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _encode(obj: Any, level: int, indent: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return "%.17g" % obj
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{pad}{json.dumps(k)}: {_encode(v, level + 1, indent)}" for k, v in obj.items())
        return "{\n" + body + "\n" + end + "}"
    if not obj:
        return "[]"
    if all(not isinstance(v, (dict, list)) for v in obj):
        return "[" + ", ".join(_encode(v, level + 1, indent) for v in obj) + "]"
    body = ",\n".join(pad + _encode(v, level + 1, indent) for v in obj)
    return "[\n" + body + "\n" + end + "]"


def dumps(obj: Any, indent: int = 2) -> str:
    """JSON text with 17 significant digits per float; key order is preserved."""
    return _encode(to_jsonable(obj), 0, indent) + "\n"


def atomic_write(path, text: str) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{p.name}.", dir=str(p.parent))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, p)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return p


def write_json(path, obj: Any) -> Path:
    return atomic_write(path, dumps(obj))


# ---------- CSV ----------

def orbit_frame(trace: OrbitTrace) -> pd.DataFrame:
    return pd.DataFrame({"t": trace.t, "re": np.real(trace.z), "im": np.imag(trace.z)})


def equilibria_frame(equilibria: Sequence[Equilibrium]) -> pd.DataFrame:
    rows = []
    for e in equilibria:
        rows.append({"id": e.id, "re": e.location.real, "im": e.location.imag, "order": e.order,
                     "class": e.eq_class.value, "period": e.period,
                     "sector_directions": ";".join("%.17g" % th for th in e.sector_directions or ())})
    return pd.DataFrame(rows, columns=["id", "re", "im", "order", "class", "period", "sector_directions"])


def write_csv(path, df: pd.DataFrame) -> Path:
    return atomic_write(path, df.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


def write_orbit_csv(path, trace: OrbitTrace) -> Path:
    return write_csv(path, orbit_frame(trace))


def document(field_source: str, window, reports: Sequence[Any], summary: Dict[str, Any]) -> Dict[str, Any]:
    """Wrapper for commands that emit several configuration reports."""
    return {"field_source": field_source,
            "window": list(window.as_tuple()) if window is not None else None,
            "reports": list(reports), "summary": summary}
