"""Spider-format dataset ingestion: schemas, examples and database cell values."""

from __future__ import annotations

import json
import sqlite3
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import (
    DbUnreadable,
    FileMissing,
    MalformedExample,
    MalformedSchema,
    NotAColumn,
    UnknownDbId,
)

DEFAULT_VALUE_CAP = 1000

_COLUMN_TYPES = {"text", "number", "time", "boolean", "other"}


class ItemKind(str, Enum):
    TABLE = "table"
    COLUMN = "column"


@dataclass(frozen=True)
class SchemaItem:
    """One entry of the linearized schema sequence (a table or a column)."""

    id: int
    kind: ItemKind
    name: str
    original_name: str
    parent_table: int | None = None
    column_type: str | None = None
    is_primary_key: bool = False
    foreign_key_to: int | None = None


@dataclass
class DatabaseSchema:
    db_id: str
    items: list[SchemaItem]
    db_path: Path | None = None

    @property
    def tables(self) -> list[SchemaItem]:
        return [it for it in self.items if it.kind is ItemKind.TABLE]

    @property
    def columns(self) -> list[SchemaItem]:
        return [it for it in self.items if it.kind is ItemKind.COLUMN]

    def columns_of(self, table_id: int) -> list[SchemaItem]:
        return [it for it in self.columns if it.parent_table == table_id]

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class Example:
    question_text: str
    question_tokens: list[str]
    gold_sql: str
    db_id: str

    @property
    def normalized_question(self) -> str:
        return " ".join(self.question_tokens)


@dataclass
class ValueStore:
    """Distinct lowercase cell values per (db_id, column id), capped per column."""

    values: dict[tuple[str, int], frozenset[str]] = field(default_factory=dict)

    def get(self, db_id: str, column_id: int) -> frozenset[str]:
        return self.values.get((db_id, column_id), frozenset())

    def put(self, db_id: str, column_id: int, vals: set[str]) -> None:
        self.values[(db_id, column_id)] = frozenset(vals)


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, peel leading/trailing punctuation off each chunk."""
    tokens: list[str] = []
    for chunk in text.lower().split():
        head: list[str] = []
        tail: list[str] = []
        while chunk and chunk[0] in string.punctuation:
            head.append(chunk[0])
            chunk = chunk[1:]
        while chunk and chunk[-1] in string.punctuation:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(head)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(tail))
    return tokens


def display_name(original: str) -> str:
    """Lowercase display form: underscores become spaces, whitespace collapsed."""
    return " ".join(original.replace("_", " ").lower().split())


def load_schemas(tables_file: str | Path, db_dir: str | Path | None = None) -> list[DatabaseSchema]:
    """Load a Spider ``tables.json`` into DatabaseSchema objects, sorted by db_id.

    The linearized item sequence is: all tables in file order, then for each
    table its columns in file order. The ``*`` pseudo-column is skipped.
    """
    tables_file = Path(tables_file)
    if not tables_file.is_file():
        raise FileMissing(str(tables_file))
    try:
        raw = json.loads(tables_file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedSchema("?", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise MalformedSchema("?", "top-level JSON value is not an array")

    schemas = [_parse_schema(entry, Path(db_dir) if db_dir else None) for entry in raw]
    return sorted(schemas, key=lambda s: s.db_id)


def _parse_schema(entry: dict, db_dir: Path | None) -> DatabaseSchema:
    db_id = entry.get("db_id")
    if not db_id or not isinstance(db_id, str):
        raise MalformedSchema(str(db_id), "missing or empty db_id")
    try:
        table_names = entry["table_names_original"]
        column_names = entry["column_names_original"]
    except KeyError as exc:
        raise MalformedSchema(db_id, f"missing field {exc}") from exc
    column_types = entry.get("column_types", ["other"] * len(column_names))
    primary_keys = entry.get("primary_keys", [])
    foreign_keys = entry.get("foreign_keys", [])

    n_tables = len(table_names)
    # Group raw column indices by table, preserving file order; skip "*" rows.
    per_table: dict[int, list[int]] = {t: [] for t in range(n_tables)}
    for raw_idx, pair in enumerate(column_names):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise MalformedSchema(db_id, f"column entry {raw_idx} is not a [table, name] pair")
        t_idx, _ = pair
        if t_idx == -1:
            continue
        if not isinstance(t_idx, int) or not 0 <= t_idx < n_tables:
            raise MalformedSchema(db_id, f"column {raw_idx} references table index {t_idx}")
        per_table[t_idx].append(raw_idx)

    pk_set = set()
    for pk in primary_keys:
        if not isinstance(pk, int) or not 0 <= pk < len(column_names):
            raise MalformedSchema(db_id, f"primary key index {pk} out of range")
        pk_set.add(pk)

    items: list[SchemaItem] = []
    for t_idx, t_name in enumerate(table_names):
        items.append(
            SchemaItem(
                id=t_idx,
                kind=ItemKind.TABLE,
                name=display_name(str(t_name)),
                original_name=str(t_name),
            )
        )
    raw_to_item: dict[int, int] = {}
    next_id = n_tables
    for t_idx in range(n_tables):
        for raw_idx in per_table[t_idx]:
            raw_to_item[raw_idx] = next_id
            next_id += 1

    fk_map: dict[int, int] = {}
    for fk in foreign_keys:
        if not isinstance(fk, (list, tuple)) or len(fk) != 2:
            raise MalformedSchema(db_id, f"foreign key entry {fk!r} is not a pair")
        src, dst = fk
        if src not in raw_to_item or dst not in raw_to_item:
            raise MalformedSchema(db_id, f"foreign key {fk!r} references unknown column")
        fk_map[src] = raw_to_item[dst]

    for t_idx in range(n_tables):
        for raw_idx in per_table[t_idx]:
            c_name = column_names[raw_idx][1]
            c_type = str(column_types[raw_idx]) if raw_idx < len(column_types) else "other"
            if c_type == "others":
                c_type = "other"
            if c_type not in _COLUMN_TYPES:
                c_type = "other"
            items.append(
                SchemaItem(
                    id=raw_to_item[raw_idx],
                    kind=ItemKind.COLUMN,
                    name=display_name(str(c_name)),
                    original_name=str(c_name),
                    parent_table=t_idx,
                    column_type=c_type,
                    is_primary_key=raw_idx in pk_set,
                    foreign_key_to=fk_map.get(raw_idx),
                )
            )

    db_path = db_dir / db_id / f"{db_id}.sqlite" if db_dir else None
    return DatabaseSchema(db_id=db_id, items=items, db_path=db_path)


def load_examples(file: str | Path, schemas: list[DatabaseSchema]) -> list[Example]:
    """Load a Spider train/dev example file, preserving file order."""
    file = Path(file)
    if not file.is_file():
        raise FileMissing(str(file))
    raw = json.loads(file.read_text(encoding="utf-8"))
    known = {s.db_id for s in schemas}
    examples = []
    for idx, entry in enumerate(raw):
        question = entry.get("question", "")
        query = entry.get("query", "")
        db_id = entry.get("db_id", "")
        if not isinstance(question, str) or not question.strip():
            raise MalformedExample(idx, "empty question")
        if not isinstance(query, str) or not query.strip():
            raise MalformedExample(idx, "empty query")
        if db_id not in known:
            raise UnknownDbId(db_id)
        examples.append(
            Example(
                question_text=question,
                question_tokens=tokenize(question),
                gold_sql=query.strip(),
                db_id=db_id,
            )
        )
    return examples


def column_values(
    db: DatabaseSchema, column: SchemaItem, cap: int = DEFAULT_VALUE_CAP
) -> set[str]:
    """Distinct, trimmed, lowercased cell values of a column (first ``cap`` ascending)."""
    if column.kind is not ItemKind.COLUMN:
        raise NotAColumn(f"{column.original_name!r} is a {column.kind.value}")
    if db.db_path is None or not Path(db.db_path).is_file():
        raise DbUnreadable(f"no database file for {db.db_id!r}")
    table = db.items[column.parent_table]
    try:
        conn = sqlite3.connect(f"file:{db.db_path}?mode=ro", uri=True)
        try:
            conn.text_factory = lambda b: b.decode("utf-8", "replace")
            cur = conn.execute(
                f'SELECT DISTINCT "{column.original_name}" FROM "{table.original_name}"'
            )
            vals = {
                str(row[0]).strip().lower()
                for row in cur.fetchall()
                if row[0] is not None
            }
        finally:
            conn.close()
    except sqlite3.Error as exc:
        raise DbUnreadable(f"{db.db_id}: {exc}") from exc
    vals.discard("")
    return set(sorted(vals)[:cap])


def load_values(
    db: DatabaseSchema, cap: int = DEFAULT_VALUE_CAP, store: ValueStore | None = None
) -> ValueStore:
    """Populate a ValueStore with every column of ``db``."""
    store = store if store is not None else ValueStore()
    for col in db.columns:
        store.put(db.db_id, col.id, column_values(db, col, cap))
    return store
