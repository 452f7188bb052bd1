"""Read-only SQL execution, result comparison, and the bounded
generate-validate-revise loop."""

from __future__ import annotations

import sqlite3
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import DbUnreadable, NotExecutable, SkelSqlError
from .llm import CompletionParams, extract_sql
from .prompts import (
    DemonstrationExample,
    FilteredSchema,
    Prompt,
    build_fallback_prompt,
    build_prompt,
)
from .spider import DatabaseSchema, Example, ValueStore

DEFAULT_TIMEOUT = 30.0
DEFAULT_MAX_FALLBACKS = 3


class ExecStatus(str, Enum):
    OK = "ok"
    SQL_ERROR = "sql_error"
    TIMEOUT = "timeout"


@dataclass
class ExecutionResult:
    status: ExecStatus
    rows: list[tuple] | None = None  # normalized cells, present iff status == OK
    raw_rows: list[tuple] | None = None
    error: str | None = None


def normalize_cell(cell):
    """Comparison form of one cell: floats rounded to 1e-6 (integral floats
    collapse to int), text lowercased."""
    if isinstance(cell, bool):
        return int(cell)
    if isinstance(cell, float):
        rounded = round(cell, 6)
        if rounded == int(rounded):
            return int(rounded)
        return rounded
    if isinstance(cell, str):
        return cell.lower()
    return cell


def execute_sql(
    db: DatabaseSchema, sql: str, timeout: float = DEFAULT_TIMEOUT
) -> ExecutionResult:
    """Run one read-only statement against the schema's SQLite file.

    Write attempts fail at the engine level (the connection is opened in
    read-only mode) and surface as sql_error; exceeding the timeout aborts
    the statement via a progress handler.
    """
    if db.db_path is None or not Path(db.db_path).is_file():
        raise DbUnreadable(f"no database file for {db.db_id!r}")
    try:
        conn = sqlite3.connect(f"file:{db.db_path}?mode=ro", uri=True)
    except sqlite3.Error as exc:
        raise DbUnreadable(f"{db.db_id}: {exc}") from exc
    deadline = time.monotonic() + timeout
    timed_out = False

    def trap():
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn.set_progress_handler(trap, 10_000)
    try:
        conn.text_factory = lambda b: b.decode("utf-8", "replace")
        cur = conn.execute(sql)
        raw_rows = [tuple(row) for row in cur.fetchall()]
    except sqlite3.Error as exc:
        if timed_out:
            return ExecutionResult(status=ExecStatus.TIMEOUT, error=f"timeout after {timeout}s")
        return ExecutionResult(status=ExecStatus.SQL_ERROR, error=str(exc))
    except sqlite3.Warning as exc:
        return ExecutionResult(status=ExecStatus.SQL_ERROR, error=str(exc))
    finally:
        conn.close()
    rows = [tuple(normalize_cell(c) for c in row) for row in raw_rows]
    return ExecutionResult(status=ExecStatus.OK, rows=rows, raw_rows=raw_rows)


def has_top_level_order_by(sql: str) -> bool:
    """True when ORDER BY appears outside any parentheses and quotes."""
    depth = 0
    quote: str | None = None
    tokens = []
    word = []
    for ch in sql:
        if quote:
            if ch == quote:
                quote = None
            continue
        if ch in ("'", '"'):
            quote = ch
            continue
        if ch == "(":
            depth += 1
            continue
        if ch == ")":
            depth = max(0, depth - 1)
            continue
        if depth == 0:
            if ch.isalnum() or ch == "_":
                word.append(ch)
            elif word:
                tokens.append("".join(word).lower())
                word = []
    if word:
        tokens.append("".join(word).lower())
    return any(a == "order" and b == "by" for a, b in zip(tokens, tokens[1:]))


def exec_match(pred: ExecutionResult, gold: ExecutionResult, order_sensitive: bool) -> bool:
    """Compare normalized result rows: list equality when order matters,
    multiset equality otherwise."""
    if pred.status is not ExecStatus.OK or gold.status is not ExecStatus.OK:
        raise NotExecutable("both results must have executed successfully")
    if order_sensitive:
        return pred.rows == gold.rows
    return Counter(pred.rows) == Counter(gold.rows)


# ---------------------------------------------------------------------------
# Fallback-revision loop
# ---------------------------------------------------------------------------

@dataclass
class AttemptRecord:
    kind: str  # initial | fallback
    raw_completion: str
    extracted_sql: str | None
    execution_status: ExecStatus | None
    error: str | None = None


@dataclass
class GenerationOutcome:
    final_sql: str | None
    final_result: ExecutionResult | None
    attempts: list[AttemptRecord] = field(default_factory=list)

    @property
    def attempts_count(self) -> int:
        return len(self.attempts)

    @property
    def fallback_used(self) -> bool:
        return any(a.kind == "fallback" for a in self.attempts)


@dataclass
class GenerationContext:
    schema: DatabaseSchema
    filtered: FilteredSchema
    demos: list[DemonstrationExample]
    values: ValueStore
    llm: object  # any client with .complete(prompt, params)
    params: CompletionParams
    timeout: float = DEFAULT_TIMEOUT


def generate_with_fallback(
    question: Example,
    ctx: GenerationContext,
    max_fallbacks: int = DEFAULT_MAX_FALLBACKS,
) -> GenerationOutcome:
    """Prompt, execute, and revise until a query runs cleanly or the fallback
    budget is spent. The first attempt uses the filtered schema with
    demonstrations; every revision sees the complete schema plus the latest
    failure. Client errors become failed attempts, never aborts."""
    outcome = GenerationOutcome(final_sql=None, final_result=None)
    failed_sql = ""
    error_text = ""
    for attempt_no in range(1 + max_fallbacks):
        if attempt_no == 0:
            kind = "initial"
            prompt: Prompt = build_prompt(ctx.demos, ctx.filtered, question)
        else:
            kind = "fallback"
            prompt = build_fallback_prompt(
                ctx.schema, question, failed_sql, error_text, ctx.values
            )
        try:
            completion = ctx.llm.complete(prompt, ctx.params)
        except SkelSqlError as exc:
            outcome.attempts.append(
                AttemptRecord(kind, "", None, None, error=str(exc))
            )
            failed_sql, error_text = "", f"completion backend error: {exc}"
            continue
        sql = extract_sql(completion.raw_text)
        if sql is None:
            outcome.attempts.append(
                AttemptRecord(kind, completion.raw_text, None, None,
                              error="no SQL statement in completion")
            )
            failed_sql = completion.raw_text
            error_text = "the completion did not contain a SQL statement"
            continue
        result = execute_sql(ctx.schema, sql, ctx.timeout)
        outcome.attempts.append(
            AttemptRecord(kind, completion.raw_text, sql, result.status, error=result.error)
        )
        if result.status is ExecStatus.OK:
            outcome.final_sql = sql
            outcome.final_result = result
            return outcome
        failed_sql = sql
        error_text = result.error or result.status.value
    return outcome
