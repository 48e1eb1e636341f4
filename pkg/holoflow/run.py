import argparse, json, os, sys, time
from dataclasses import replace
from typing import Any, Dict, List, Optional

import pandas as pd

from . import db as ledger
from .acceptance import format_table, run_corpus
from .config import SUBCOMMANDS, RunConfig, Window, load_config, run_config_from_dict
from .equilibria import find_equilibria
from .errors import ConfigError, HoloflowError, NumericalOverflow
from .field_expr import parse, substitute
from .integrator import BACKWARD, FORWARD, integrate, trace_orbit
from .render import render_svg
from .report import (atomic_write, document, dumps, equilibria_frame, orbit_frame,
                     write_csv, write_json)
from .separatrix import analyze, compute_basin, configuration_summary, heteroclinic_region_probe
from .telemetry import make_logger
from .transit import clock_contour_check, transit_time_clock

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_VERDICT = 0, 1, 2, 3


def _parse_point(text: str) -> complex:
    """A start point written as a constant expression, e.g. '1', '0.5+2*i'."""
    f = parse(text)
    if not f.is_constant:
        raise ConfigError(f"point {text!r} must not contain x")
    return complex(f(0j))


def _parse_params(items: List[str]) -> Dict[str, List[float]]:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--param needs NAME=v1,v2,..., got {item!r}")
        name, values = item.split("=", 1)
        try:
            out[name.strip()] = [float(v) for v in values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--param values must be numbers, got {values!r}")
    return out


# ---------- subcommands ----------

class _Run:
    """Per-invocation state: parsed field, window, settings, logger and ledger handles."""

    def __init__(self, rc: RunConfig, logger, con=None, run_id=None):
        self.rc = rc
        self.settings = rc.settings()
        self.log = logger
        self.con, self.run_id = con, run_id
        self.summary: Dict[str, Any] = {}
        self.failed_verdicts = 0

    def field(self, source: Optional[str] = None):
        f = parse(source if source is not None else self.rc.field_source)
        for d in f.diagnostics:
            self.log({"type": "warn", "op": "parse", "msg": d, "source": f.source})
        return f

    def window_for(self, f, extra=()) -> Window:
        if self.rc.window is not None:
            return self.rc.window
        # default: 4x the bounding box of the equilibria found in a generous probe box
        probe = Window(-10, -10, 10, 10)
        try:
            eqs = find_equilibria(f, probe, self.settings, self.log)
        except HoloflowError as e:
            self.log({"type": "warn", "op": "window", "msg": f"default window probe failed: {e}"})
            eqs = []
        return Window.around([e.location for e in eqs] + list(extra))

    def emit(self, doc: Any, svg: Optional[str] = None, frame=None):
        out = self.rc.outputs
        if out.get("json"):
            write_json(out["json"], doc)
        if out.get("svg") and svg is not None:
            atomic_write(out["svg"], svg)
        if out.get("csv") and frame is not None:
            write_csv(out["csv"], frame)

    def record_equilibria(self, eqs):
        if self.con is None:
            return
        for e in eqs:
            ledger.insert_equilibrium(self.con, {
                "run_id": self.run_id, "eq_id": e.id, "re": e.location.real, "im": e.location.imag,
                "eq_order": e.order, "eq_class": e.eq_class.value, "period": e.period,
                "sector_directions": json.dumps(list(e.sector_directions or ())),
            })

    def record_reports(self, reports, offset: int = 0):
        if self.con is None:
            return
        for i, rep in enumerate(reports):
            for r in rep.records:
                bu = r.blow_up_times or (None, None)
                ledger.insert_separatrix(self.con, {
                    "run_id": self.run_id, "report_index": offset + i, "record_id": r.id,
                    "equilibrium": rep.equilibrium.id, "region_kind": rep.region_kind.value, "side": r.side,
                    "transit_time": r.transit_time, "t_minus": bu[0], "t_plus": bu[1],
                    "seed_re": r.seed.real, "seed_im": r.seed.imag, "reason": r.reason,
                })
            for v in rep.verdicts:
                ledger.insert_verdict(self.con, {
                    "run_id": self.run_id, "report_index": offset + i, "name": v.name, "passed": int(v.passed),
                    "measured": dumps(v.measured).strip(), "bound": dumps(v.bound).strip(),
                })

    # -- equilibria --

    def equilibria(self) -> int:
        f = self.field()
        window = self.window_for(f)
        eqs = find_equilibria(f, window, self.settings, self.log)
        self.record_equilibria(eqs)
        print(f"{len(eqs)} equilibria of {f.source} in {window.as_tuple()}")
        for e in eqs:
            extra = f" T={e.period:.12g}" if e.period else ""
            if e.sector_directions:
                extra += " directions=" + ",".join("%.6f" % th for th in e.sector_directions)
            print(f"  [{e.id}] {e.location.real:+.12g}{e.location.imag:+.12g}i  m={e.order}  {e.eq_class.value}{extra}")
        self.summary = {"equilibria": len(eqs)}
        self.emit({"field_source": f.source, "window": list(window.as_tuple()), "equilibria": eqs},
                  render_svg([], [], eqs, window), equilibria_frame(eqs))
        return EXIT_OK

    # -- orbit --

    def orbit(self) -> int:
        opts = self.rc.options
        if opts.get("from") is None:
            raise ConfigError("orbit needs --from z0")
        f = self.field()
        z0 = _parse_point(str(opts["from"]))
        window = self.window_for(f, [z0])
        eqs = find_equilibria(f, window, self.settings, self.log)
        direction = opts.get("dir") or "both"
        budget = {"t_end": abs(float(opts["time"]))} if opts.get("time") is not None else None
        if direction == "both":
            tr = trace_orbit(f, z0, self.settings, eqs, window, budget, self.log)
        elif direction in (FORWARD, BACKWARD):
            tr = integrate(f, z0, direction, budget, self.settings, eqs, window, self.log)
        else:
            raise ConfigError(f"--dir must be forward, backward or both, got {direction!r}")
        for name, fate in (("forward", tr.forward_fate), ("backward", tr.backward_fate)):
            if fate is None:
                continue
            note = f"  t*={fate.t_star:.12g}" if fate.is_blow_up else ""
            print(f"{name}: {fate.kind.value}{'(' + fate.reason + ')' if fate.reason else ''}{note}")
        print(f"span [{tr.span[0]:.12g}, {tr.span[1]:.12g}], {len(tr.t)} samples")
        self.summary = {"forward": tr.forward_fate, "backward": tr.backward_fate}
        doc = {"field_source": f.source, "start": z0, "direction": direction,
               "span": list(tr.span), "samples": len(tr.t), "t_plus": tr.t_plus, "t_minus": tr.t_minus,
               "forward_fate": tr.forward_fate, "backward_fate": tr.backward_fate}
        self.emit(doc, render_svg([], [], eqs, window, orbits=[tr]), orbit_frame(tr))
        return EXIT_OK

    # -- transit --

    def transit(self) -> int:
        opts = self.rc.options
        if opts.get("from") is None or opts.get("time") is None:
            raise ConfigError("transit needs --from z0 and --time t")
        f = self.field()
        z0 = _parse_point(str(opts["from"]))
        t = float(opts["time"])
        window = self.window_for(f, [z0])
        eqs = find_equilibria(f, window, self.settings, self.log)
        direction = FORWARD if t >= 0 else BACKWARD
        tr = integrate(f, z0, direction, {"t_end": abs(t)}, self.settings, eqs, window, self.log)
        lo, hi = tr.span
        t2 = max(lo, min(hi, t))
        clock = transit_time_clock(tr, 0.0, t2)
        residual = clock_contour_check(f, tr, 0.0, t2, self.settings)
        end = tr.at(t2)
        print(f"from {z0} to {end} : clock {clock.value.real:.15g}  contour residual {residual:.3e}")
        if t2 != t:
            print(f"orbit ends at t = {t2:.12g} before the requested time "
                  f"({(tr.forward_fate or tr.backward_fate).kind.value})")
        self.summary = {"clock": clock.value.real, "residual": residual, "reached": t2}
        self.emit({"field_source": f.source, "start": z0, "end": end, "clock": clock,
                   "contour_residual": residual, "requested_time": t, "reached_time": t2},
                  render_svg([], [], eqs, window, orbits=[tr]), orbit_frame(tr))
        return EXIT_OK

    # -- separatrices / portrait --

    def _analyze(self, f, window):
        eqs = find_equilibria(f, window, self.settings, self.log)
        self.record_equilibria(eqs)
        reports = analyze(f, window, self.rc.resolution, self.settings, eqs, self.log)
        return eqs, reports

    def _print_reports(self, reports):
        for i, rep in enumerate(reports):
            where = f" sector {rep.sector_index}" if rep.sector_index is not None else ""
            sides = ",".join(r.side for r in rep.records) or "-"
            verdicts = " ".join(f"{v.name}={'pass' if v.passed else 'FAIL'}" for v in rep.verdicts)
            print(f"[{i}] {rep.region_kind.value} of {rep.equilibrium.id}{where}: sides {sides}  {verdicts}")

    def separatrices(self) -> int:
        f = self.field()
        window = self.window_for(f)
        eqs, reports = self._analyze(f, window)
        self.record_reports(reports)
        self._print_reports(reports)
        summary = configuration_summary(reports)
        self.summary = summary
        self.failed_verdicts = len(summary["verdicts_failed"])
        print(f"{summary['separatrices']} separatrices ({summary['positive']} positive, {summary['negative']} "
              f"negative, {summary['double']} double-sided), {summary['blow_ups']} blow-ups")
        grids = _unique_grids(reports)
        records = [r for rep in reports for r in rep.separatrices]
        doc = document(f.source, window, reports, summary)
        pair = self.rc.options.get("pair")
        if pair:
            probe = self._probe(f, window, eqs, pair, offset=len(reports))
            doc["heteroclinic_probe"] = probe
            records += probe.records
        svg = render_svg(grids, _renumber(records), eqs, window)
        self.emit(doc, svg, _records_frame(reports))
        return EXIT_OK

    def _probe(self, f, window, eqs, pair, offset: int = 0):
        by_id = {e.id: e for e in eqs}
        missing = [i for i in pair if i not in by_id]
        if len(pair) != 2 or missing:
            raise ConfigError(f"--pair needs two equilibrium ids out of {sorted(by_id)}, got {list(pair)}")
        probe = heteroclinic_region_probe(f, by_id[pair[0]], by_id[pair[1]], window, self.rc.resolution,
                                          self.settings, eqs, self.log)
        self.record_reports([probe], offset=offset)
        sides = ",".join(r.side for r in probe.records) or "-"
        print(f"heteroclinic region {pair[0]}-{pair[1]}: sides {sides}"
              + (" (no heteroclinic cells)" if probe.empty_boundary else ""))
        return probe

    def portrait(self) -> int:
        """Basins and sectors of every equilibrium, no boundary tracing."""
        f = self.field()
        window = self.window_for(f)
        eqs = find_equilibria(f, window, self.settings, self.log)
        grids = [compute_basin(f, e, window, self.rc.resolution, self.settings, eqs, logger=self.log) for e in eqs]
        svg = render_svg(grids, [], eqs, window)
        self.summary = {"grids": len(grids)}
        self.emit({"field_source": f.source, "window": list(window.as_tuple()), "equilibria": eqs,
                   "grids": [{"equilibrium": g.equilibrium.id, "region_kind": g.region_kind.value,
                              "counts": g.counts()} for g in grids]}, svg)
        if not self.rc.outputs.get("svg"):
            sys.stdout.write(svg)
        return EXIT_OK

    # -- sweep --

    def sweep(self) -> int:
        if len(self.rc.params) != 1:
            raise ConfigError("sweep takes exactly one --param NAME=v1,v2,...")
        (name, values), = self.rc.params.items()
        per_value, changes, previous = [], [], None
        for i, v in enumerate(values):
            src = substitute(self.rc.field_source, name, v)
            f = self.field(src)
            window = self.window_for(f)
            eqs, reports = self._analyze(f, window)
            self.record_reports(reports, offset=1000 * i)
            s = configuration_summary(reports)
            self.failed_verdicts += len(s["verdicts_failed"])
            key = (s["positive"], s["negative"], s["double"])
            if previous is not None and key != previous:
                changes.append({"value": v, "from": list(previous), "to": list(key)})
            previous = key
            through = ""
            if s["double_sided"]:
                through = "  double-sided seeds " + ", ".join(
                    f"{d['seed'].real:+.6f}{d['seed'].imag:+.6f}i" for d in s["double_sided"])
            print(f"{name}={v:.12g}: {s['separatrices']} separatrices ({s['positive']}+ {s['negative']}- "
                  f"{s['double']}+-), {s['blow_ups']} blow-ups{through}")
            per_value.append({"value": v, "field_source": src, "window": list(window.as_tuple()),
                              "summary": s, "reports": reports})
        self.summary = {"values": len(values), "changes": changes}
        self.emit({"field_source": self.rc.field_source, "param": name, "values": per_value, "changes": changes})
        return EXIT_OK

    # -- verify --

    def verify(self) -> int:
        items = self.rc.options.get("items")
        res = self.rc.resolution if self.rc.options.get("res_given") else (48, 48)
        checks = run_corpus(items, self.settings, res, self.log)
        print(format_table(checks))
        failed = [c for c in checks if not c.passed]
        self.failed_verdicts = len(failed)
        self.summary = {"checks": len(checks), "failed": [f"{c.item}:{c.name}" for c in failed]}
        if self.con is not None:
            for c in checks:
                ledger.insert_verdict(self.con, {"run_id": self.run_id, "report_index": c.item, "name": c.name,
                                                 "passed": int(c.passed), "measured": dumps(c.measured).strip(),
                                                 "bound": dumps(c.expected).strip()})
        self.emit({"checks": checks, "summary": self.summary})
        return EXIT_OK


def _unique_grids(reports):
    seen, out = set(), []
    for rep in reports:
        if rep.grid is not None and id(rep.grid) not in seen:
            seen.add(id(rep.grid))
            out.append(rep.grid)
    return out


def _renumber(records):
    return [replace(r, id=i) for i, r in enumerate(records)]


def _records_frame(reports):
    frames = []
    for i, rep in enumerate(reports):
        for r in rep.records:
            df = orbit_frame(r.orbit)
            df.insert(0, "record", r.id)
            df.insert(0, "report", i)
            frames.append(df)
    if not frames:
        return pd.DataFrame(columns=["report", "record", "t", "re", "im"])
    return pd.concat(frames, ignore_index=True)


# ---------- entry points ----------

def _report_error(log, op: str, e: HoloflowError) -> int:
    log({"type": "error", "op": op, "msg": str(e), "error": type(e).__name__})
    print(f"holoflow: {type(e).__name__}: {e}", file=sys.stderr)
    return e.exit_code


def run(config: RunConfig, logger=None, verbose: bool = False) -> int:
    """Dispatch one subcommand; returns the process exit code and never raises a HoloflowError."""
    try:
        config.validate()
    except HoloflowError as e:
        return _report_error(lambda _evt: None, "validate", e)
    settings = config.settings()
    db_path = config.db_path or os.getenv("HOLOFLOW_DB")
    con = run_id = None
    if db_path:
        con = ledger.open_db(db_path)
        if "telemetry_db" not in config.tolerances:
            settings["telemetry_db"] = True
        run_id = ledger.insert_run(con, {
            "subcommand": config.subcommand, "field_source": config.field_source,
            "window": ",".join(repr(v) for v in config.window.as_tuple()) if config.window else None,
            "resolution": ",".join(str(v) for v in config.resolution),
            "config_path": config.options.get("config_path"),
            "settings": json.dumps(config.tolerances, default=str),
        })
    log = logger or make_logger(settings, con, run_id, verbose)
    state = _Run(config, log, con, run_id)
    t0 = time.time()
    code = EXIT_OK
    try:
        code = getattr(state, config.subcommand)()
        if config.strict and state.failed_verdicts:
            code = EXIT_VERDICT
    except HoloflowError as e:
        code = _report_error(log, config.subcommand, e)
    except OverflowError as e:
        code = _report_error(log, config.subcommand, NumericalOverflow(str(e)))
    finally:
        if con is not None:
            state.summary["seconds"] = round(time.time() - t0, 3)
            ledger.finish_run(con, run_id, code, state.summary)
            con.close()
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="holoflow", description="Separatrices of holomorphic flows x' = F(x).")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("field", nargs="?", default=None, help="field expression in x, e.g. 'i*x*(x-1)'")
    ap.add_argument("--config", help="JSON run config; flags override its entries")
    ap.add_argument("--window", help="xmin,ymin,xmax,ymax")
    ap.add_argument("--res", help="nx,ny grid resolution")
    ap.add_argument("--rtol", type=float)
    ap.add_argument("--escape-radius", type=float)
    ap.add_argument("--budget", type=int, help="maximum integration steps per orbit")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--json")
    ap.add_argument("--svg")
    ap.add_argument("--csv")
    ap.add_argument("--param", action="append", default=[], help="NAME=v1,v2,... (sweep)")
    ap.add_argument("--from", dest="start", help="start point, e.g. 1 or 0.5+2*i")
    ap.add_argument("--dir", choices=(FORWARD, BACKWARD, "both"))
    ap.add_argument("--time", type=float)
    ap.add_argument("--items", help="verify: comma separated item numbers")
    ap.add_argument("--pair", help="separatrices: equilibrium ids a,b for the heteroclinic region probe")
    ap.add_argument("--strict", action="store_true")
    ap.add_argument("--db", default=None, help="SQLite run ledger (default $HOLOFLOW_DB)")
    ap.add_argument("--verbose", action="store_true", help="print info events too")
    return ap


def config_from_args(args) -> RunConfig:
    cfg: Dict[str, Any] = load_config(args.config) if args.config else {}
    cfg["subcommand"] = args.subcommand
    if args.field is not None:
        cfg["field"] = args.field
    if args.window:
        cfg["window"] = args.window
    if args.res:
        try:
            cfg["resolution"] = [int(v) for v in args.res.split(",")]
        except ValueError:
            raise ConfigError(f"--res must be nx,ny, got {args.res!r}")
        if len(cfg["resolution"]) != 2:
            raise ConfigError(f"--res must be nx,ny, got {args.res!r}")
    tol = dict(cfg.get("tolerances") or {})
    for key, val in (("rtol", args.rtol), ("escape_radius", args.escape_radius),
                     ("max_steps", args.budget), ("workers", args.workers)):
        if val is not None:
            tol[key] = val
    cfg["tolerances"] = tol
    for k in ("json", "svg", "csv"):
        if getattr(args, k):
            cfg[k] = getattr(args, k)
    if args.param:
        cfg["params"] = _parse_params(args.param)
    if args.db:
        cfg["db"] = args.db
    if args.strict:
        cfg["strict"] = True
    rc = run_config_from_dict(cfg)
    opts = dict(rc.options)
    for k, v in (("from", args.start), ("dir", args.dir), ("time", args.time)):
        if v is not None:
            opts[k] = v
    if args.items:
        try:
            opts["items"] = [int(v) for v in args.items.split(",")]
        except ValueError:
            raise ConfigError(f"--items must be comma separated numbers, got {args.items!r}")
    if args.pair:
        try:
            opts["pair"] = [int(v) for v in args.pair.split(",")]
        except ValueError:
            raise ConfigError(f"--pair must be two equilibrium ids, got {args.pair!r}")
    opts["res_given"] = bool(args.res or cfg.get("resolution"))
    opts["config_path"] = cfg.get("__path")
    rc.options = opts
    return rc


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        rc = config_from_args(args)
        return run(rc, verbose=args.verbose)
    except HoloflowError as e:
        print(f"holoflow: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n🛑 interrupted", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
