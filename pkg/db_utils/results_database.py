import json
import logging
import sqlite3
from contextlib import closing
from typing import Any, Dict, List, Optional, Set, Tuple

logger = logging.getLogger('bandsel.results_database')

RESULTS_DB_NAME = "results.db"

RecordKey = Tuple[str, int, float, int]

JSON_COLUMNS = ("bands", "class_ids", "per_class_mcc", "class_sizes")


class ResultsDatabase:
    """One row per grid point (method, band_count, ratio, seed); completed rows make reruns resume."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        self.initialize_database()

    def get_db_connection(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.db_path)
        conn.row_factory = sqlite3.Row
        return conn

    def initialize_database(self):
        with closing(self.get_db_connection()) as conn, conn:
            cursor = conn.cursor()
            cursor.execute("""
                CREATE TABLE IF NOT EXISTS records (
                    method TEXT NOT NULL, band_count INTEGER NOT NULL, ratio REAL NOT NULL, seed INTEGER NOT NULL,
                    status TEXT NOT NULL, bands TEXT, class_ids TEXT, per_class_mcc TEXT, class_sizes TEXT,
                    weighted_mcc REAL, wall_time REAL, message TEXT,
                    PRIMARY KEY (method, band_count, ratio, seed)
                )
            """)
            for column, kind in (("gamma", "REAL"), ("mcm_c", "REAL")):
                try:
                    cursor.execute(f"ALTER TABLE records ADD COLUMN {column} {kind}")
                    logger.debug(f"Added '{column}' column to records table.")
                except sqlite3.OperationalError as e:
                    if "duplicate column name" not in str(e):
                        logger.error("An unexpected DB error occurred when adding new column.", exc_info=True)
                        raise
        logger.debug(f"Results database ready at {self.db_path}")

    def upsert_record(self, row: Dict[str, Any]):
        values = dict(row)
        for column in JSON_COLUMNS:
            if values.get(column) is not None:
                values[column] = json.dumps(values[column])
        columns = list(values)
        with closing(self.get_db_connection()) as conn, conn:
            conn.execute(
                f"INSERT OR REPLACE INTO records ({', '.join(columns)}) VALUES ({', '.join('?' for _ in columns)})",
                tuple(values[c] for c in columns),
            )

    @staticmethod
    def _decode(row: sqlite3.Row) -> Dict[str, Any]:
        record = dict(row)
        for column in JSON_COLUMNS:
            record[column] = json.loads(record[column]) if record[column] else None
        return record

    def get_record(self, key: RecordKey) -> Optional[Dict[str, Any]]:
        with closing(self.get_db_connection()) as conn:
            row = conn.execute(
                "SELECT * FROM records WHERE method = ? AND band_count = ? AND ratio = ? AND seed = ?", key
            ).fetchone()
            return self._decode(row) if row else None

    def completed_keys(self) -> Set[RecordKey]:
        with closing(self.get_db_connection()) as conn:
            rows = conn.execute("SELECT method, band_count, ratio, seed FROM records WHERE status = 'ok'").fetchall()
            return {(r["method"], r["band_count"], r["ratio"], r["seed"]) for r in rows}

    def get_all_records(self) -> List[Dict[str, Any]]:
        with closing(self.get_db_connection()) as conn:
            rows = conn.execute("SELECT * FROM records ORDER BY method, band_count, ratio, seed").fetchall()
            return [self._decode(r) for r in rows]

    def count_failed(self) -> int:
        with closing(self.get_db_connection()) as conn:
            return conn.execute("SELECT COUNT(*) FROM records WHERE status = 'failed'").fetchone()[0]
