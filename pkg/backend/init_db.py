import sqlite3
from pathlib import Path


def init_database(db_path: str = "data/ebcl.db", quiet: bool = False):
    """Initialize the run ledger with all required tables"""

    Path(db_path).parent.mkdir(parents=True, exist_ok=True)

    conn = sqlite3.connect(db_path)
    cursor = conn.cursor()

    # One row per CLI invocation
    cursor.execute("""
    CREATE TABLE IF NOT EXISTS runs (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        command TEXT NOT NULL,
        config_hash TEXT NOT NULL,
        seed INTEGER,
        tool_version TEXT NOT NULL,
        out_dir TEXT,
        status TEXT DEFAULT 'running' CHECK(status IN ('running', 'passed', 'failed', 'error')),
        error_message TEXT,
        started_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
        finished_at TIMESTAMP
    )
    """)

    # Files written by a run
    cursor.execute("""
    CREATE TABLE IF NOT EXISTS artifacts (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        run_id INTEGER NOT NULL REFERENCES runs(id),
        path TEXT NOT NULL,
        sha256 TEXT NOT NULL,
        created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
    )
    """)

    # Statistical checks produced by a run
    cursor.execute("""
    CREATE TABLE IF NOT EXISTS test_reports (
        id INTEGER PRIMARY KEY AUTOINCREMENT,
        run_id INTEGER NOT NULL REFERENCES runs(id),
        test TEXT NOT NULL,
        statistic REAL,
        threshold REAL,
        pass INTEGER NOT NULL CHECK(pass IN (0, 1)),
        meta TEXT,
        created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
    )
    """)

    cursor.execute("CREATE INDEX IF NOT EXISTS idx_runs_started ON runs(started_at DESC)")
    cursor.execute("CREATE INDEX IF NOT EXISTS idx_artifacts_run ON artifacts(run_id)")
    cursor.execute("CREATE INDEX IF NOT EXISTS idx_reports_run ON test_reports(run_id)")

    conn.commit()
    conn.close()

    if not quiet:
        print(f"✓ Run ledger initialized at {db_path}")


if __name__ == "__main__":
    init_database()
