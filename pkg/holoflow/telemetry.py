# holoflow/telemetry.py
"""
The CLI logger: a callable taking dict events
{"type": "info"|"warn"|"error", "op": ..., "msg": ..., ...}.
"""
import json
import sys
import threading
from typing import Any, Callable, Dict, List, Optional

from . import db as ledger
from .report import to_jsonable


def noop(_evt: Dict[str, Any]) -> None:
    pass


class EventLog:
    """Fans events out to stderr (JSON lines) and to the ledger's system_events."""

    def __init__(self, console: bool = True, con=None, run_id: Optional[int] = None,
                 stream=None, min_console: str = "warn"):
        self.console = console
        self.con = con
        self.run_id = run_id
        self.stream = stream or sys.stderr
        self.min_console = min_console
        self.events: List[Dict[str, Any]] = []
        self._lock = threading.Lock()

    def __call__(self, evt: Dict[str, Any]) -> None:
        evt = dict(evt)
        evt.setdefault("type", "info")
        with self._lock:
            self.events.append(evt)
            if self.console and (self.min_console == "info" or evt["type"] != "info"):
                self.stream.write(json.dumps(to_jsonable(evt), default=str) + "\n")
                self.stream.flush()
            if self.con is not None:
                try:
                    details = {k: v for k, v in evt.items() if k not in ("type", "op", "msg")}
                    ledger.insert_system_event(self.con, {
                        "run_id": self.run_id,
                        "event_type": evt.get("op", "unknown"),
                        "severity": evt["type"],
                        "message": str(evt.get("msg", "")),
                        "details": json.dumps(to_jsonable(details), default=str) if details else None,
                    })
                except Exception as e:
                    print(f"⚠️  ledger write failed: {e}", file=self.stream)

    def warnings(self) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["type"] == "warn"]


def make_logger(cfg: Dict[str, Any], con=None, run_id: Optional[int] = None,
                verbose: bool = False) -> Callable[[Dict[str, Any]], None]:
    return EventLog(console=cfg.get("telemetry_console", True),
                    con=con if cfg.get("telemetry_db") else None,
                    run_id=run_id, min_console="info" if verbose else "warn")
