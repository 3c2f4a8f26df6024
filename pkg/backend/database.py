import json
from contextlib import asynccontextmanager
from typing import Dict, List, Optional

import aiosqlite

from config import config


class RunLedger:
    """Async access to the run ledger (runs, artifacts, test reports)"""

    def __init__(self, db_path: str = None):
        self.db_path = db_path or config.db_path

    @asynccontextmanager
    async def _connect(self):
        async with aiosqlite.connect(self.db_path) as db:
            # artifacts and reports must point at an existing run
            await db.execute("PRAGMA foreign_keys = ON")
            db.row_factory = aiosqlite.Row
            yield db

    async def execute(self, query: str, params: tuple = ()) -> int:
        """Execute a single statement; returns lastrowid"""
        async with self._connect() as db:
            cursor = await db.execute(query, params)
            await db.commit()
            return cursor.lastrowid

    async def fetch_one(self, query: str, params: tuple = ()) -> Optional[Dict]:
        async with self._connect() as db:
            async with db.execute(query, params) as cursor:
                row = await cursor.fetchone()
                return dict(row) if row else None

    async def fetch_all(self, query: str, params: tuple = ()) -> List[Dict]:
        async with self._connect() as db:
            async with db.execute(query, params) as cursor:
                return [dict(row) for row in await cursor.fetchall()]

    # Runs

    async def start_run(
        self,
        command: str,
        config_hash: str,
        seed: int,
        tool_version: str,
        out_dir: str = None
    ) -> int:
        """Record a run as started; returns its id"""
        query = """
        INSERT INTO runs (command, config_hash, seed, tool_version, out_dir)
        VALUES (?, ?, ?, ?, ?)
        """
        return await self.execute(query, (command, config_hash, seed, tool_version, out_dir))

    async def finish_run(self, run_id: int, status: str, error_message: str = None):
        query = """
        UPDATE runs SET status = ?, error_message = ?, finished_at = CURRENT_TIMESTAMP
        WHERE id = ?
        """
        await self.execute(query, (status, error_message, run_id))

    async def get_run(self, run_id: int) -> Optional[Dict]:
        return await self.fetch_one("SELECT * FROM runs WHERE id = ?", (run_id,))

    async def get_recent_runs(self, limit: int = 20) -> List[Dict]:
        query = "SELECT * FROM runs ORDER BY started_at DESC, id DESC LIMIT ?"
        return await self.fetch_all(query, (limit,))

    # Artifacts

    async def add_artifact(self, run_id: int, path: str, sha256: str) -> int:
        query = "INSERT INTO artifacts (run_id, path, sha256) VALUES (?, ?, ?)"
        return await self.execute(query, (run_id, path, sha256))

    async def get_artifacts(self, run_id: int) -> List[Dict]:
        return await self.fetch_all("SELECT * FROM artifacts WHERE run_id = ? ORDER BY id", (run_id,))

    # Test reports

    async def add_report(self, run_id: int, report: Dict) -> int:
        """Store one serialized TestReport ({test, statistic, threshold, pass, meta})"""
        query = """
        INSERT INTO test_reports (run_id, test, statistic, threshold, pass, meta)
        VALUES (?, ?, ?, ?, ?, ?)
        """
        return await self.execute(
            query,
            (run_id, report['test'], report['statistic'], report['threshold'],
             1 if report['pass'] else 0, json.dumps(report.get('meta', {}), default=str))
        )

    async def get_reports(self, run_id: int) -> List[Dict]:
        rows = await self.fetch_all("SELECT * FROM test_reports WHERE run_id = ? ORDER BY id", (run_id,))
        for row in rows:
            row['pass'] = bool(row['pass'])
            row['meta'] = json.loads(row['meta']) if row['meta'] else {}
        return rows
