"""
Run records and SQLite run history
"""

import json
import sqlite3
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

from dataclasses_json import dataclass_json

from config import Config

DATABASE_PATH = Config.RUNS_DATABASE
TOOL_VERSION = "1.0.0"


@dataclass_json
@dataclass
class RunManifest:
    """Everything needed to reproduce one command's outputs."""

    command: str
    scenario_path: Optional[str]
    config_echo: str
    seeds: List[int]
    output_dir: str
    tool_version: str = TOOL_VERSION
    wall_clock_s: float = 0.0
    started_at: str = field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    outputs: List[str] = field(default_factory=list)


@dataclass_json
@dataclass
class RunRecord:
    command: str
    output_dir: str
    timestamp: datetime
    summary: Dict[str, Any]
    scenario_path: Optional[str] = None


def _connect(db_path: Optional[str]) -> sqlite3.Connection:
    return sqlite3.connect(db_path or DATABASE_PATH)


async def init_database(db_path: Optional[str] = None):
    """Initialize the SQLite database with the run table."""
    conn = _connect(db_path)
    cursor = conn.cursor()

    cursor.execute('''
        CREATE TABLE IF NOT EXISTS runs (
            id INTEGER PRIMARY KEY AUTOINCREMENT,
            command TEXT NOT NULL,
            output_dir TEXT NOT NULL,
            scenario_path TEXT,
            timestamp TEXT NOT NULL,
            summary TEXT NOT NULL
        )
    ''')

    conn.commit()
    conn.close()


async def save_run(record: RunRecord, db_path: Optional[str] = None) -> int:
    """Save a run record to the database."""
    conn = _connect(db_path)
    cursor = conn.cursor()

    cursor.execute('''
        INSERT INTO runs (command, output_dir, scenario_path, timestamp, summary)
        VALUES (?, ?, ?, ?, ?)
    ''', (
        record.command,
        record.output_dir,
        record.scenario_path,
        record.timestamp.isoformat(),
        json.dumps(record.summary, default=str),
    ))

    run_id = cursor.lastrowid
    conn.commit()
    conn.close()

    return run_id


async def get_run_history(command: Optional[str] = None, limit: int = 50, db_path: Optional[str] = None) -> List[Dict[str, Any]]:
    """Most recent runs first, optionally for one command."""
    conn = _connect(db_path)
    cursor = conn.cursor()

    query = "SELECT id, command, output_dir, scenario_path, timestamp, summary FROM runs"
    params: List[Any] = []

    if command:
        query += " WHERE command = ?"
        params.append(command)

    query += " ORDER BY id DESC LIMIT ?"
    params.append(limit)

    cursor.execute(query, params)
    rows = cursor.fetchall()

    results = []
    for row in rows:
        results.append({
            'id': row[0],
            'command': row[1],
            'output_dir': row[2],
            'scenario_path': row[3],
            'timestamp': row[4],
            'summary': json.loads(row[5]),
        })

    conn.close()
    return results
