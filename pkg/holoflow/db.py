import sqlite3, os, datetime, json

def open_db(path: str = "./holoflow.db"):
    """Open the holoflow run ledger, creating the schema when missing."""
    first = not os.path.exists(path)
    con = sqlite3.connect(path, check_same_thread=False)
    initialize(con)
    con.execute("PRAGMA journal_mode=WAL")
    con.execute("PRAGMA synchronous=NORMAL")
    con.execute("PRAGMA cache_size=10000")
    con.execute("PRAGMA temp_store=MEMORY")
    if first:
        con.commit()
    return con

def initialize(con):
    """Create the ledger tables."""
    cur = con.cursor()
    cur.executescript('''
        -- One row per CLI invocation
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            started_ms INTEGER NOT NULL,          -- Unix timestamp in ms
            finished_ms INTEGER,
            subcommand TEXT NOT NULL,
            field_source TEXT NOT NULL,
            window TEXT,                          -- 'xmin,ymin,xmax,ymax'
            resolution TEXT,                      -- 'nx,ny'
            config_path TEXT,
            settings TEXT,                        -- JSON of tolerance overrides
            exit_code INTEGER,
            summary TEXT,                         -- JSON summary of the run
            inserted_at TEXT NOT NULL
        );

        CREATE TABLE IF NOT EXISTS equilibria (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL,
            eq_id INTEGER NOT NULL,               -- id within the run
            re REAL NOT NULL,
            im REAL NOT NULL,
            eq_order INTEGER NOT NULL,
            eq_class TEXT NOT NULL,               -- 'Center', 'StableNode', ..., 'Multiple'
            period REAL,
            sector_directions TEXT,               -- JSON list of angles
            inserted_at TEXT NOT NULL,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        );

        CREATE TABLE IF NOT EXISTS separatrices (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL,
            report_index INTEGER NOT NULL,
            record_id INTEGER NOT NULL,
            equilibrium INTEGER NOT NULL,         -- eq_id of the basin/sector
            region_kind TEXT NOT NULL,
            side TEXT NOT NULL,                   -- 'positive', 'negative', 'double', 'none', 'undetermined'
            transit_time REAL,
            t_minus REAL,
            t_plus REAL,
            seed_re REAL NOT NULL,
            seed_im REAL NOT NULL,
            reason TEXT,
            inserted_at TEXT NOT NULL,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        );

        CREATE TABLE IF NOT EXISTS verdicts (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            run_id INTEGER NOT NULL,
            report_index INTEGER,
            name TEXT NOT NULL,
            passed INTEGER NOT NULL,              -- 1 pass, 0 fail
            measured TEXT,                        -- JSON
            bound TEXT,                           -- JSON
            inserted_at TEXT NOT NULL,
            FOREIGN KEY (run_id) REFERENCES runs(id)
        );

        -- Warnings and errors raised while running
        CREATE TABLE IF NOT EXISTS system_events (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            timestamp INTEGER NOT NULL,
            run_id INTEGER,
            event_type TEXT NOT NULL,             -- operation that emitted the event
            severity TEXT NOT NULL,               -- 'info', 'warn', 'error'
            message TEXT NOT NULL,
            details TEXT,                         -- JSON details if needed
            duration_ms INTEGER DEFAULT 0,
            inserted_at TEXT NOT NULL
        );

        CREATE INDEX IF NOT EXISTS idx_runs_started ON runs(started_ms);
        CREATE INDEX IF NOT EXISTS idx_equilibria_run ON equilibria(run_id);
        CREATE INDEX IF NOT EXISTS idx_separatrices_run ON separatrices(run_id);
        CREATE INDEX IF NOT EXISTS idx_verdicts_run ON verdicts(run_id);
        CREATE INDEX IF NOT EXISTS idx_system_events_run ON system_events(run_id);
        CREATE INDEX IF NOT EXISTS idx_system_events_type ON system_events(event_type);
    ''')
    con.commit()

def now_ms() -> int:
    return int(datetime.datetime.now().timestamp() * 1000)

def _insert(con, table, cols, data):
    data["inserted_at"] = datetime.datetime.utcnow().isoformat()
    con.execute(f"INSERT INTO {table}({','.join(cols)}) VALUES ({','.join(['?']*len(cols))})",
                tuple(data.get(k) for k in cols))
    con.commit()
    return con.execute("SELECT last_insert_rowid()").fetchone()[0]

# --- Writers ---

def insert_run(con, run_data):
    """Insert a run row; returns the run id."""
    cols = ("started_ms", "subcommand", "field_source", "window", "resolution",
            "config_path", "settings", "inserted_at")
    run_data.setdefault("started_ms", now_ms())
    return _insert(con, "runs", cols, run_data)

def finish_run(con, run_id, exit_code, summary=None):
    """Stamp the finish time, exit code and summary on a run."""
    con.execute("UPDATE runs SET finished_ms=?, exit_code=?, summary=? WHERE id=?",
                (now_ms(), exit_code, json.dumps(summary, default=str) if summary is not None else None, run_id))
    con.commit()

def insert_equilibrium(con, eq_data):
    cols = ("run_id", "eq_id", "re", "im", "eq_order", "eq_class", "period", "sector_directions", "inserted_at")
    return _insert(con, "equilibria", cols, eq_data)

def insert_separatrix(con, sep_data):
    cols = ("run_id", "report_index", "record_id", "equilibrium", "region_kind", "side", "transit_time",
            "t_minus", "t_plus", "seed_re", "seed_im", "reason", "inserted_at")
    return _insert(con, "separatrices", cols, sep_data)

def insert_verdict(con, verdict_data):
    cols = ("run_id", "report_index", "name", "passed", "measured", "bound", "inserted_at")
    return _insert(con, "verdicts", cols, verdict_data)

def insert_system_event(con, event_data):
    """Insert a system event (warnings, errors, etc.)."""
    cols = ("timestamp", "run_id", "event_type", "severity", "message", "details", "duration_ms", "inserted_at")
    event_data.setdefault("timestamp", now_ms())
    return _insert(con, "system_events", cols, event_data)

# --- Query helpers ---

def get_run_summary(con, run_id):
    """Counts for one run: equilibria, separatrices per side, verdicts passed/failed."""
    cur = con.cursor()
    cur.execute("SELECT subcommand, field_source, exit_code, started_ms, finished_ms FROM runs WHERE id = ?",
                (run_id,))
    run = cur.fetchone()
    if run is None:
        return None
    cur.execute("SELECT COUNT(*) FROM equilibria WHERE run_id = ?", (run_id,))
    n_eq = cur.fetchone()[0]
    cur.execute("""
        SELECT side, COUNT(*) FROM separatrices
        WHERE run_id = ?
        GROUP BY side ORDER BY side
    """, (run_id,))
    sides = dict(cur.fetchall())
    cur.execute("""
        SELECT
            SUM(CASE WHEN passed = 1 THEN 1 ELSE 0 END),
            SUM(CASE WHEN passed = 0 THEN 1 ELSE 0 END)
        FROM verdicts WHERE run_id = ?
    """, (run_id,))
    passed, failed = cur.fetchone()
    cur.execute("SELECT COUNT(*) FROM system_events WHERE run_id = ? AND severity = 'warn'", (run_id,))
    warns = cur.fetchone()[0]
    return {
        "run_id": run_id,
        "subcommand": run[0],
        "field_source": run[1],
        "exit_code": run[2],
        "duration_ms": (run[4] - run[3]) if run[4] is not None else None,
        "equilibria": n_eq,
        "sides": sides,
        "verdicts_passed": passed or 0,
        "verdicts_failed": failed or 0,
        "warnings": warns,
    }

def get_recent_runs(con, limit: int = 20):
    """Most recent runs, newest first."""
    cur = con.cursor()
    cur.execute("""
        SELECT id, subcommand, field_source, exit_code, started_ms, finished_ms
        FROM runs
        ORDER BY id DESC LIMIT ?
    """, (limit,))
    return cur.fetchall()
