"""Spider-format schema and question catalog.

Loads the benchmark's ``tables.json`` / question files into immutable domain
objects and serializes schemas in the two prompt layout styles (line-per-table
"#" blocks and the run-on ``table : table.col , ...`` form).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

from .errors import SpiderFormatError

DIFFICULTY_LEVELS = ("easy", "medium", "hard", "extra")


@dataclass(frozen=True)
class Column:
    name: str
    declared_type: str = ""

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise SpiderFormatError("column name is empty")


@dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        if not self.columns:
            raise SpiderFormatError(f"table {self.name!r} has no columns")
        seen = set()
        for col in self.columns:
            key = col.name.lower()
            if key in seen:
                raise SpiderFormatError(f"duplicate column {col.name!r} in table {self.name!r}")
            seen.add(key)

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


@dataclass(frozen=True)
class FkRelation:
    from_table: str
    from_column: str
    to_table: str
    to_column: str

    def __post_init__(self) -> None:
        if (self.from_table.lower(), self.from_column.lower()) == (
            self.to_table.lower(),
            self.to_column.lower(),
        ):
            raise SpiderFormatError("foreign key endpoints are identical")


@dataclass(frozen=True)
class DatabaseSchema:
    """One database: tables, columns, and foreign-key relations."""

    db_id: str
    tables: tuple[Table, ...]
    foreign_keys: tuple[FkRelation, ...] = ()
    sqlite_path: Path | None = None

    def __post_init__(self) -> None:
        names = set()
        for table in self.tables:
            key = table.name.lower()
            if key in names:
                raise SpiderFormatError(f"duplicate table {table.name!r} in {self.db_id}")
            names.add(key)
        for fk in self.foreign_keys:
            for tbl, col in ((fk.from_table, fk.from_column), (fk.to_table, fk.to_column)):
                table = self.find_table(tbl)
                if table is None or col.lower() not in {c.lower() for c in table.column_names}:
                    raise SpiderFormatError(
                        f"foreign key endpoint {tbl}.{col} not found in schema {self.db_id}"
                    )

    def find_table(self, name: str) -> Table | None:
        wanted = name.lower()
        for table in self.tables:
            if table.name.lower() == wanted:
                return table
        return None

    @property
    def table_items(self) -> list[tuple[str, list[str]]]:
        return [(t.name, t.column_names) for t in self.tables]


@dataclass(frozen=True)
class LinkedSchema:
    """The recalled subset of a schema: ranked tables/columns plus surviving FKs."""

    db_id: str
    tables: tuple[tuple[str, tuple[str, ...]], ...]
    foreign_keys: tuple[FkRelation, ...] = ()

    @property
    def table_items(self) -> list[tuple[str, list[str]]]:
        return [(name, list(cols)) for name, cols in self.tables]


SchemaView = Union[DatabaseSchema, LinkedSchema]


@dataclass(frozen=True)
class Question:
    question_id: str
    db_id: str
    text: str
    gold_sql: str | None = None
    difficulty: str | None = None

    def __post_init__(self) -> None:
        if self.difficulty is not None and self.difficulty not in DIFFICULTY_LEVELS:
            raise SpiderFormatError(f"unknown difficulty {self.difficulty!r}")


def load_spider_tables(path: Path | str) -> list[DatabaseSchema]:
    """Parse a Spider ``tables.json`` file into one schema per descriptor.

    The sentinel ``(-1, "*")`` column is dropped, foreign-key column indices are
    resolved to (table, column) name pairs, and original-case names are kept.
    SQLite files are expected at ``<parent>/database/<db_id>/<db_id>.sqlite``.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpiderFormatError(f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise SpiderFormatError(f"{path}: expected a JSON array of database descriptors")

    schemas = []
    for descriptor in raw:
        schemas.append(_schema_from_descriptor(descriptor, path.parent))
    return schemas


def _schema_from_descriptor(descriptor: dict, root: Path) -> DatabaseSchema:
    db_id = descriptor.get("db_id")
    if not db_id:
        raise SpiderFormatError("database descriptor without db_id")
    table_names = descriptor.get("table_names_original") or descriptor.get("table_names") or []
    column_pairs = descriptor.get("column_names_original") or descriptor.get("column_names") or []
    column_types = descriptor.get("column_types") or [""] * len(column_pairs)

    columns_per_table: dict[int, list[Column]] = {i: [] for i in range(len(table_names))}
    # Global column index -> (table index, name); index 0 is usually the "*" sentinel.
    column_ref: dict[int, tuple[int, str]] = {}
    for idx, (table_idx, col_name) in enumerate(column_pairs):
        column_ref[idx] = (table_idx, col_name)
        if table_idx < 0 or col_name == "*":
            continue
        declared = column_types[idx] if idx < len(column_types) else ""
        columns_per_table.setdefault(table_idx, []).append(Column(col_name, declared))

    tables = tuple(
        Table(name, tuple(columns_per_table.get(i, ())))
        for i, name in enumerate(table_names)
    )

    fks = []
    for pair in descriptor.get("foreign_keys") or []:
        from_idx, to_idx = pair
        for idx in (from_idx, to_idx):
            if idx not in column_ref or not 0 <= column_ref[idx][0] < len(table_names):
                raise SpiderFormatError(
                    f"{db_id}: foreign key references dangling column index {idx}"
                )
        from_tbl, from_col = column_ref[from_idx]
        to_tbl, to_col = column_ref[to_idx]
        fks.append(
            FkRelation(table_names[from_tbl], from_col, table_names[to_tbl], to_col)
        )

    sqlite_path = root / "database" / db_id / f"{db_id}.sqlite"
    return DatabaseSchema(db_id, tables, tuple(fks), sqlite_path)


def load_questions(path: Path | str) -> list[Question]:
    """Parse a Spider dev/test question file.

    ``question_id`` defaults to the zero-based record position; ``gold_sql``
    comes from the record's ``query`` field when present.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpiderFormatError(f"{path}: malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise SpiderFormatError(f"{path}: expected a JSON array of question records")

    questions = []
    for idx, record in enumerate(raw):
        text = record.get("question")
        db_id = record.get("db_id")
        if not text or not db_id:
            raise SpiderFormatError(f"{path}: record {idx} is missing question or db_id")
        questions.append(
            Question(
                question_id=str(record.get("question_id", idx)),
                db_id=db_id,
                text=text,
                gold_sql=record.get("query"),
                difficulty=record.get("difficulty"),
            )
        )
    return questions


def build_catalog(schemas: Iterable[DatabaseSchema]) -> dict[str, DatabaseSchema]:
    return {schema.db_id: schema for schema in schemas}


def format_table_line(name: str, columns: Sequence[str], terminator: str = "") -> str:
    return f"# {name} ( {', '.join(columns)} ){terminator}"


def format_fk_line(fk: FkRelation) -> str:
    return f"# {fk.from_table}.{fk.from_column} = {fk.to_table}.{fk.to_column}"


def serialize_clear_layout(schema_view: SchemaView) -> str:
    """Render the "#"-prefixed layout: one ``# table ( cols );`` line per table,
    then one ``# t1.c1 = t2.c2`` line per foreign key."""
    items = schema_view.table_items
    if not items:
        raise ValueError("schema view has no tables")
    lines = [format_table_line(name, cols, terminator=";") for name, cols in items]
    lines.extend(format_fk_line(fk) for fk in schema_view.foreign_keys)
    return "\n".join(lines)


COMPLICATED_INSTRUCTION = "Complete sqlite SQL query only and with no explanation."


def serialize_complicated_layout(schema: SchemaView, question: Question) -> str:
    """Render the run-on layout: instruction, question, and ``table : table.col , ...``
    segments joined by " | ", ending with a bare SELECT."""
    segments = [
        f"{name} : " + " , ".join(f"{name}.{col}" for col in cols)
        for name, cols in schema.table_items
    ]
    context = " | ".join(segments)
    return (
        f"{COMPLICATED_INSTRUCTION}\n"
        f"{question.text} Sqlite SQL tables, with their properties: {context}\n"
        "SELECT"
    )
