import aiosqlite
import sqlite3
from datetime import datetime
from typing import Dict, List, Optional, Tuple
import logging
from contextlib import asynccontextmanager
import asyncio
from tenacity import retry, stop_after_attempt, wait_exponential, retry_if_exception_type

from config.settings import settings
from services.cost_model import AgingReport

logger = logging.getLogger(__name__)

CELL_COLUMNS = ("is_offset", "tile_row", "tile_col", "cell_row", "cell_col")

_retry_locked = retry(
    stop=stop_after_attempt(settings.DB_RETRIES),
    wait=wait_exponential(multiplier=0.1, min=0.1, max=2),
    retry=retry_if_exception_type(sqlite3.OperationalError),
    reraise=True,
)


class WearLedgerService:
    """Cumulative per-cell write counts across simulation sessions, kept in SQLite."""

    def __init__(self, db_path: Optional[str] = None):
        self.db_path = db_path or settings.LEDGER_PATH
        if not self.db_path:
            raise ValueError("Wear ledger path is not configured")
        self.connection: Optional[aiosqlite.Connection] = None
        self._connection_lock = asyncio.Lock()

    @asynccontextmanager
    async def get_connection(self):
        """Context manager for database connections."""
        async with self._connection_lock:
            if not self.connection:
                await self.init_db()
            try:
                yield self.connection
            except Exception as e:
                logger.error(f"Ledger connection error: {str(e)}")
                if self.connection:
                    await self.connection.close()
                    self.connection = None
                raise

    @_retry_locked
    async def init_db(self):
        """Open the ledger and create its tables if they don't exist."""
        try:
            self.connection = await aiosqlite.connect(self.db_path)
            await self.connection.execute("PRAGMA journal_mode=WAL")
            await self.connection.execute("PRAGMA synchronous=NORMAL")
            await self.connection.execute("""
                CREATE TABLE IF NOT EXISTS sessions (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    name TEXT NOT NULL,
                    tile_rows INTEGER NOT NULL,
                    tile_cols INTEGER NOT NULL,
                    element_writes INTEGER NOT NULL,
                    energy_uj REAL NOT NULL,
                    recorded_at TEXT NOT NULL
                )
            """)
            await self.connection.execute("""
                CREATE TABLE IF NOT EXISTS cell_writes (
                    tile_rows INTEGER NOT NULL,
                    tile_cols INTEGER NOT NULL,
                    is_offset INTEGER NOT NULL,
                    tile_row INTEGER NOT NULL,
                    tile_col INTEGER NOT NULL,
                    cell_row INTEGER NOT NULL,
                    cell_col INTEGER NOT NULL,
                    writes INTEGER NOT NULL,
                    PRIMARY KEY (tile_rows, tile_cols, is_offset, tile_row, tile_col, cell_row, cell_col)
                )
            """)
            await self.connection.commit()
            logger.info(f"Wear ledger initialized at {self.db_path}")
        except sqlite3.OperationalError:
            await self._drop_connection()
            raise
        except Exception as e:
            logger.error(f"Failed to initialize wear ledger: {str(e)}")
            await self._drop_connection()
            raise RuntimeError(f"Wear ledger initialization failed: {str(e)}")

    async def _drop_connection(self):
        if self.connection:
            await self.connection.close()
            self.connection = None

    @_retry_locked
    async def record_session(self, name: str, aging: AgingReport, element_writes: int, energy_uj: float,
                             tile: Tuple[int, int]) -> int:
        """Add one session's slot-folded cell counts to the ledger; returns the session id.

        Counts are kept per tile geometry ``(rows, cols)``; slots of different
        geometries never share a row.
        """
        if aging.fold != "slot":
            raise ValueError("The wear ledger stores slot-folded counts only")
        async with self.get_connection() as conn:
            try:
                cursor = await conn.execute(
                    "INSERT INTO sessions (name, tile_rows, tile_cols, element_writes, energy_uj, recorded_at) "
                    "VALUES (?, ?, ?, ?, ?, ?)",
                    (name, *tile, element_writes, energy_uj, datetime.now().isoformat())
                )
                await conn.executemany(
                    """
                    INSERT INTO cell_writes (tile_rows, tile_cols, is_offset, tile_row, tile_col, cell_row, cell_col, writes)
                    VALUES (?, ?, ?, ?, ?, ?, ?, ?)
                    ON CONFLICT (tile_rows, tile_cols, is_offset, tile_row, tile_col, cell_row, cell_col)
                    DO UPDATE SET writes = writes + excluded.writes
                    """,
                    [(*tile, *cell, count) for cell, count in aging.counts.items()]
                )
                await conn.commit()
                session_id = cursor.lastrowid
                logger.info(f"Recorded session {session_id} ('{name}') with {len(aging.counts)} cells")
                return session_id
            except sqlite3.OperationalError:
                await conn.rollback()
                raise
            except Exception as e:
                await conn.rollback()
                logger.error(f"Failed to record session: {str(e)}")
                raise RuntimeError(f"Failed to record session: {str(e)}")

    async def get_cell_counts(self, tile: Tuple[int, int]) -> Dict[tuple, int]:
        """Slot counts recorded so far for one tile geometry."""
        async with self.get_connection() as conn:
            cursor = await conn.execute(
                f"SELECT {', '.join(CELL_COLUMNS)}, writes FROM cell_writes WHERE tile_rows = ? AND tile_cols = ?",
                tuple(tile)
            )
            rows = await cursor.fetchall()
            return {tuple(row[:-1]): row[-1] for row in rows}

    async def get_sessions(self) -> List[dict]:
        async with self.get_connection() as conn:
            cursor = await conn.execute(
                "SELECT id, name, tile_rows, tile_cols, element_writes, energy_uj, recorded_at FROM sessions ORDER BY id"
            )
            rows = await cursor.fetchall()
            return [
                {"id": r[0], "name": r[1], "tile": (r[2], r[3]), "element_writes": r[4], "energy_uj": r[5],
                 "recorded_at": r[6]}
                for r in rows
            ]

    async def close(self):
        """Close the ledger connection."""
        async with self._connection_lock:
            if self.connection:
                await self.connection.close()
                self.connection = None
                logger.info("Wear ledger connection closed")
