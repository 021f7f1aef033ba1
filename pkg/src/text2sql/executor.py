"""Read-only SQLite execution and result-table equivalence.

Queries run against read-only connections with a watchdog timeout; results are
materialized into ResultTable values whose equivalence semantics (numeric
tolerance, multiset vs sequence comparison) drive both consistency voting and
execution-accuracy scoring.
"""

from __future__ import annotations

import sqlite3
import threading
from dataclasses import dataclass, replace
from pathlib import Path
from urllib.parse import quote

from .errors import DatabaseMissingError

NUMERIC_TOLERANCE = 1e-6
MAX_RESULT_ROWS = 10_000

STATUS_SUCCESS = "success"
STATUS_ERROR = "error"
STATUS_TIMEOUT = "timeout"
STATUS_OVERFLOW = "overflow"


@dataclass(frozen=True)
class ResultTable:
    """A materialized query result; the unit of equivalence for voting and EX."""

    column_count: int
    rows: tuple[tuple, ...]
    order_sensitive: bool = False

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row) != self.column_count:
                raise ValueError("row width does not match column_count")


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    table: ResultTable | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == STATUS_SUCCESS

    @classmethod
    def success(cls, table: ResultTable) -> "ExecutionOutcome":
        return cls(STATUS_SUCCESS, table=table)

    @classmethod
    def sql_error(cls, message: str) -> "ExecutionOutcome":
        return cls(STATUS_ERROR, message=message)

    @classmethod
    def timeout(cls) -> "ExecutionOutcome":
        return cls(STATUS_TIMEOUT, message="statement interrupted by timeout")

    @classmethod
    def overflow(cls) -> "ExecutionOutcome":
        return cls(STATUS_OVERFLOW, message=f"result exceeds {MAX_RESULT_ROWS} rows")


def is_order_sensitive(sql: str) -> bool:
    """True iff ORDER BY appears at subquery depth zero, outside string literals."""
    tokens = _depth_zero_tokens(sql)
    for first, second in zip(tokens, tokens[1:]):
        if first == "order" and second == "by":
            return True
    return False


def _depth_zero_tokens(sql: str) -> list[str]:
    tokens: list[str] = []
    word: list[str] = []
    depth = 0
    in_single = False
    in_double = False

    def flush() -> None:
        if word and depth == 0:
            tokens.append("".join(word).lower())
        word.clear()

    for ch in sql:
        if in_single:
            if ch == "'":
                in_single = False
            continue
        if in_double:
            if ch == '"':
                in_double = False
            continue
        if ch == "'":
            flush()
            in_single = True
        elif ch == '"':
            flush()
            in_double = True
        elif ch == "(":
            flush()
            depth += 1
        elif ch == ")":
            flush()
            depth = max(0, depth - 1)
        elif ch.isalnum() or ch == "_":
            word.append(ch)
        else:
            flush()
    flush()
    return tokens


def _first_keyword(sql: str) -> str:
    for token in _depth_zero_tokens(sql):
        return token
    return ""


def execute_sql(db_path: Path | str, sql: str, timeout: float = 5.0) -> ExecutionOutcome:
    """Run one SELECT against the database, materializing the full result set.

    Engine errors become SqlError outcomes, watchdog expiry becomes Timeout,
    and anything that is not a SELECT/WITH statement is refused. A missing
    database file is an environment fault and raises instead.
    """
    db_path = Path(db_path)
    if not db_path.is_file():
        raise DatabaseMissingError(f"database file not found: {db_path}")
    if _first_keyword(sql) not in ("select", "with"):
        return ExecutionOutcome.sql_error("write statement refused")

    uri = f"file:{quote(str(db_path))}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    interrupted = threading.Event()

    def _interrupt() -> None:
        interrupted.set()
        conn.interrupt()

    watchdog = threading.Timer(timeout, _interrupt)
    watchdog.daemon = True
    watchdog.start()
    try:
        cursor = conn.execute(sql)
        rows: list[tuple] = []
        while True:
            batch = cursor.fetchmany(512)
            if not batch:
                break
            rows.extend(batch)
            if len(rows) > MAX_RESULT_ROWS:
                return ExecutionOutcome.overflow()
        column_count = len(cursor.description) if cursor.description else 0
        table = ResultTable(
            column_count=column_count,
            rows=tuple(tuple(row) for row in rows),
            order_sensitive=is_order_sensitive(sql),
        )
        return ExecutionOutcome.success(table)
    except sqlite3.Error as exc:
        if interrupted.is_set():
            return ExecutionOutcome.timeout()
        return ExecutionOutcome.sql_error(str(exc))
    finally:
        watchdog.cancel()
        conn.close()


def cells_equal(a, b) -> bool:
    """Cell equivalence: numbers within 1e-6 absolute tolerance (int 3 == real 3.0),
    everything else by exact equality with matching type class."""
    if a is None or b is None:
        return a is None and b is None
    a_num = isinstance(a, (int, float)) and not isinstance(a, bool)
    b_num = isinstance(b, (int, float)) and not isinstance(b, bool)
    if a_num and b_num:
        return abs(float(a) - float(b)) <= NUMERIC_TOLERANCE
    if type(a) is not type(b):
        return False
    return a == b


def _rows_equal(a: tuple, b: tuple) -> bool:
    return len(a) == len(b) and all(cells_equal(x, y) for x, y in zip(a, b))


def _cell_sort_key(cell) -> tuple:
    if cell is None:
        return (0, 0)
    if isinstance(cell, (int, float)) and not isinstance(cell, bool):
        return (1, float(cell))
    if isinstance(cell, str):
        return (2, cell)
    return (3, bytes(cell).hex())


def _row_sort_key(row: tuple) -> tuple:
    return tuple(_cell_sort_key(cell) for cell in row)


def results_equivalent(a: ResultTable, b: ResultTable) -> bool:
    """Result equivalence: sequences when either side is order sensitive,
    multisets otherwise, with tolerant cell comparison throughout."""
    if a.column_count != b.column_count or len(a.rows) != len(b.rows):
        return False
    if a.order_sensitive or b.order_sensitive:
        return all(_rows_equal(x, y) for x, y in zip(a.rows, b.rows))
    # Fast path: exact multiset equality (Python already unifies 3 and 3.0).
    if sorted(a.rows, key=_row_sort_key) == sorted(b.rows, key=_row_sort_key):
        return True
    left = sorted(a.rows, key=_row_sort_key)
    right = sorted(b.rows, key=_row_sort_key)
    if all(_rows_equal(x, y) for x, y in zip(left, right)):
        return True
    # Near-tolerance values can sort apart; fall back to explicit matching.
    if len(left) > 1000:
        return False
    remaining = list(right)
    for row in left:
        for i, other in enumerate(remaining):
            if _rows_equal(row, other):
                del remaining[i]
                break
        else:
            return False
    return True


def with_order_sensitivity(table: ResultTable, order_sensitive: bool) -> ResultTable:
    if table.order_sensitive == order_sensitive:
        return table
    return replace(table, order_sensitive=order_sensitive)
