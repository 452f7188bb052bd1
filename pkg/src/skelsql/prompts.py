"""Prompt assembly: relevance-filtered schema, retrieved demonstrations, and
the fallback prompt used to revise a failed query against the full schema."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ShapeMismatch
from .spider import DatabaseSchema, Example, ItemKind, SchemaItem, ValueStore

SAMPLE_VALUES_PER_COLUMN = 3
DEFAULT_THETA = 0.4
DEFAULT_MAX_PROMPT_TOKENS = 6000


@dataclass(frozen=True)
class DemonstrationExample:
    """A retrieved (question, SQL) pair shown to the model."""

    question: str
    skeleton_text: str
    sql: str
    db_id: str
    similarity: float


@dataclass
class FilteredSchema:
    schema: DatabaseSchema
    kept_ids: frozenset[int]
    sample_values: dict[int, list[str]] = field(default_factory=dict)

    @property
    def kept_tables(self) -> list[SchemaItem]:
        return [t for t in self.schema.tables if t.id in self.kept_ids]

    def kept_columns_of(self, table_id: int) -> list[SchemaItem]:
        return [c for c in self.schema.columns_of(table_id) if c.id in self.kept_ids]

    @classmethod
    def full(cls, schema: DatabaseSchema, values: ValueStore | None = None) -> "FilteredSchema":
        kept = frozenset(item.id for item in schema.items)
        return cls(schema, kept, _collect_samples(schema, kept, values))


def _collect_samples(
    schema: DatabaseSchema, kept: frozenset[int], values: ValueStore | None
) -> dict[int, list[str]]:
    if values is None:
        return {}
    samples = {}
    for col in schema.columns:
        if col.id in kept:
            vals = sorted(values.get(schema.db_id, col.id))[:SAMPLE_VALUES_PER_COLUMN]
            if vals:
                samples[col.id] = vals
    return samples


def filter_schema(
    schema: DatabaseSchema,
    item_scores,
    theta: float = DEFAULT_THETA,
    values: ValueStore | None = None,
) -> FilteredSchema:
    """Keep items scoring at least theta, then close over structure:
    parent tables of kept columns, primary keys of kept tables, and both
    endpoints of foreign keys whose tables are both kept. If nothing clears
    the threshold, fall back to the single best-scoring table with all of
    its columns."""
    if len(item_scores) != len(schema.items):
        raise ShapeMismatch(f"{len(item_scores)} scores for {len(schema.items)} items")

    kept = {item.id for item in schema.items if item_scores[item.id] >= theta}
    if not kept:
        best = max(schema.tables, key=lambda t: (item_scores[t.id], -t.id))
        kept = {best.id} | {c.id for c in schema.columns_of(best.id)}
    else:
        kept = _close(schema, kept)
    return FilteredSchema(schema, frozenset(kept), _collect_samples(schema, frozenset(kept), values))


def _close(schema: DatabaseSchema, kept: set[int]) -> set[int]:
    kept = set(kept)
    while True:
        before = len(kept)
        for item in schema.items:
            if item.id not in kept:
                continue
            if item.kind is ItemKind.COLUMN:
                kept.add(item.parent_table)
        for col in schema.columns:
            if col.is_primary_key and col.parent_table in kept:
                kept.add(col.id)
            if col.foreign_key_to is not None:
                target = schema.items[col.foreign_key_to]
                if col.parent_table in kept and target.parent_table in kept:
                    kept.add(col.id)
                    kept.add(target.id)
        if len(kept) == before:
            return kept


@dataclass
class Prompt:
    text: str
    demo_span: tuple[int, int]
    schema_span: tuple[int, int]
    question_span: tuple[int, int]

    @property
    def token_estimate(self) -> int:
        return math.ceil(len(self.text) / 4)


def render_demonstrations(demos: list[DemonstrationExample]) -> str:
    """Each demo as a question comment plus its SQL terminated with ';',
    blank-line separated, in descending similarity order."""
    ordered = sorted(demos, key=lambda d: -d.similarity)
    blocks = []
    for demo in ordered:
        sql = demo.sql.strip()
        if not sql.endswith(";"):
            sql += ";"
        blocks.append(f"-- Question: {demo.question}\n{sql}")
    return "\n\n".join(blocks)


def render_schema(filtered: FilteredSchema) -> str:
    lines = []
    schema = filtered.schema
    for table in filtered.kept_tables:
        cols = filtered.kept_columns_of(table.id)
        col_defs = ", ".join(
            f"{c.original_name} {(c.column_type or 'other').upper()}" for c in cols
        )
        lines.append(f"CREATE TABLE {table.original_name} ({col_defs});")
        for c in cols:
            vals = filtered.sample_values.get(c.id)
            if vals:
                lines.append(f"-- {c.original_name} examples: {', '.join(vals)}")
    for col in schema.columns:
        if col.id in filtered.kept_ids and col.foreign_key_to is not None:
            target = schema.items[col.foreign_key_to]
            if target.id in filtered.kept_ids:
                src_table = schema.items[col.parent_table]
                dst_table = schema.items[target.parent_table]
                lines.append(
                    f"-- FOREIGN KEY {src_table.original_name}.{col.original_name}"
                    f" REFERENCES {dst_table.original_name}.{target.original_name}"
                )
    return "\n".join(lines)


def _assemble(demo_text: str, schema_text: str, question_text: str) -> Prompt:
    segments = []
    spans = []
    cursor = 0
    for part in (demo_text, schema_text, question_text):
        if part:
            if segments:
                cursor += 2  # the "\n\n" joiner
            spans.append((cursor, cursor + len(part)))
            segments.append(part)
            cursor += len(part)
        else:
            spans.append((cursor, cursor))
    text = "\n\n".join(segments)
    return Prompt(text=text, demo_span=spans[0], schema_span=spans[1], question_span=spans[2])


def build_prompt(
    demos: list[DemonstrationExample],
    filtered: FilteredSchema,
    question: Example,
    max_tokens: int = DEFAULT_MAX_PROMPT_TOKENS,
) -> Prompt:
    """Demonstrations, then the filtered schema, then the question with an
    SQL priming line. Drops the least similar demos if the estimate exceeds
    ``max_tokens``."""
    if not filtered.kept_ids:
        raise ValueError("filtered schema is empty")
    demos = sorted(demos, key=lambda d: -d.similarity)
    question_text = f"-- Question: {question.question_text}\n-- SQL:"
    schema_text = render_schema(filtered)
    prompt = _assemble(render_demonstrations(demos), schema_text, question_text)
    while demos and prompt.token_estimate > max_tokens:
        demos = demos[:-1]
        prompt = _assemble(render_demonstrations(demos), schema_text, question_text)
    return prompt


def build_fallback_prompt(
    schema: DatabaseSchema,
    question: Example,
    failed_sql: str,
    error: str,
    values: ValueStore | None = None,
) -> Prompt:
    """Revision prompt: the complete schema, the failed SQL and its error,
    and an instruction to produce a corrected query. No demonstrations."""
    schema_text = render_schema(FilteredSchema.full(schema, values))
    failed = " ".join(failed_sql.split()) or "(empty)"
    err = " ".join(error.split()) or "(no error text)"
    question_text = (
        "-- The previous SQL query failed.\n"
        f"-- Failed SQL: {failed}\n"
        f"-- Error: {err}\n"
        "-- Write a corrected SQL query for the question below.\n"
        f"-- Question: {question.question_text}\n"
        "-- SQL:"
    )
    return _assemble("", schema_text, question_text)
