"""End-to-end orchestration: index building, evaluation runs, VA/EX metrics
and machine-readable reports."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

from . import desemanticize as desem
from .encoder import DEFAULT_DIM, DEFAULT_SEED, make_backend
from .errors import SkelSqlError
from .execution import (
    DEFAULT_MAX_FALLBACKS,
    DEFAULT_TIMEOUT,
    ExecStatus,
    GenerationContext,
    exec_match,
    execute_sql,
    generate_with_fallback,
    has_top_level_order_by,
)
from .index import IndexEntry, SkeletonIndex
from .llm import Cassette, CompletionParams, HttpClient, MockClient, ReplayClient
from .prompts import DemonstrationExample, filter_schema
from .spider import (
    DEFAULT_VALUE_CAP,
    DatabaseSchema,
    Example,
    ValueStore,
    load_examples,
    load_schemas,
    load_values,
)

logger = logging.getLogger("skelsql")

MOCK_BEHAVIORS = ("gold", "fail-then-gold", "always-fail")
INVALID_SQL = "SELECT nonexistent_column FROM nonexistent_table"


@dataclass
class RunConfig:
    tables: Path
    db_dir: Path
    index: Path
    train: Path | None = None
    dev: Path | None = None
    out: Path | None = None
    dump_relevance: Path | None = None
    cassette: Path | None = None

    k: int = 8
    alpha: float = desem.DEFAULT_ALPHA
    beta: float = desem.DEFAULT_BETA
    tau: float = desem.DEFAULT_TAU
    theta: float = 0.4
    max_fallbacks: int = DEFAULT_MAX_FALLBACKS

    backend: str = "reference"
    sidecar_url: str | None = None
    llm: str = "mock"
    llm_url: str | None = None
    model: str = "text-davinci-003"
    mock_behavior: str = "gold"

    exclude_same_db: bool = False
    seed: int = DEFAULT_SEED
    dim: int = DEFAULT_DIM
    workers: int = 4
    value_cap: int = DEFAULT_VALUE_CAP
    timeout: float = DEFAULT_TIMEOUT

    def validate(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("alpha", "tau", "theta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.max_fallbacks < 0:
            raise ValueError("max_fallbacks must be >= 0")
        if self.llm not in ("mock", "replay", "http"):
            raise ValueError(f"unknown llm backend {self.llm!r}")
        if self.mock_behavior not in MOCK_BEHAVIORS:
            raise ValueError(f"unknown mock behavior {self.mock_behavior!r}")
        if self.backend not in ("reference", "sidecar"):
            raise ValueError(f"unknown encoder backend {self.backend!r}")

    def echo(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}


@dataclass
class EvalRecord:
    index: int
    db_id: str
    question: str
    skeleton: str
    retrieved: list[dict]
    kept_item_ids: list[int]
    final_sql: str | None
    attempts_count: int
    fallback_used: bool
    va: bool
    ex: bool
    error: str | None = None


@dataclass
class EvalReport:
    records: list[EvalRecord]
    va_rate: float
    ex_rate: float
    config: dict
    wall_time_s: float = 0.0

    @classmethod
    def from_records(
        cls, records: list[EvalRecord], config: dict, wall_time_s: float = 0.0
    ) -> "EvalReport":
        n = len(records)
        va_rate = sum(r.va for r in records) / n if n else 0.0
        ex_rate = sum(r.ex for r in records) / n if n else 0.0
        return cls(records, va_rate, ex_rate, config, wall_time_s)


class _Pipeline:
    """Shared state for one run: schemas, value stores, backend."""

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        self.backend = make_backend(
            config.backend, config.sidecar_url, dim=config.dim, seed=config.seed
        )
        self.schemas = {
            s.db_id: s for s in load_schemas(config.tables, db_dir=config.db_dir)
        }
        self.values = ValueStore()
        self._loaded_dbs: set[str] = set()

    def schema(self, db_id: str) -> DatabaseSchema:
        return self.schemas[db_id]

    def ensure_values(self, db_id: str) -> None:
        if db_id not in self._loaded_dbs:
            load_values(self.schemas[db_id], self.config.value_cap, self.values)
            self._loaded_dbs.add(db_id)

    def desemanticize(self, example: Example):
        cfg = self.config
        return desem.desemanticize(
            example,
            self.schema(example.db_id),
            self.backend,
            self.values,
            alpha=cfg.alpha,
            beta=cfg.beta,
            tau=cfg.tau,
        )


def build_index(config: RunConfig) -> SkeletonIndex:
    """De-semanticize and embed every training example; persist the index."""
    if config.train is None:
        raise ValueError("build_index requires a training split")
    pipeline = _Pipeline(config)
    train = load_examples(config.train, list(pipeline.schemas.values()))
    for ex in train:
        pipeline.ensure_values(ex.db_id)

    index = SkeletonIndex()
    for i, ex in enumerate(train):
        skeleton, _ = pipeline.desemanticize(ex)
        vector = pipeline.backend.sentence_embed(skeleton.text)
        index.add(IndexEntry(example_id=i, vector=vector, skeleton_text=skeleton.text))
        if (i + 1) % 50 == 0 or i + 1 == len(train):
            logger.info("indexed %d/%d skeletons", i + 1, len(train))
    index.save(config.index)
    return index


def _make_llm(config: RunConfig, gold_sql: str):
    if config.llm == "mock":
        if config.mock_behavior == "gold":
            script = [gold_sql]
        elif config.mock_behavior == "fail-then-gold":
            script = [INVALID_SQL, gold_sql]
        else:  # always-fail
            script = [INVALID_SQL] * (1 + config.max_fallbacks)
        return MockClient(script)
    if config.llm == "replay":
        if config.cassette is None:
            raise ValueError("replay llm requires --cassette")
        return ReplayClient(Cassette.open(config.cassette))
    cassette = Cassette.open(config.cassette) if config.cassette else None
    if config.llm_url is None:
        raise ValueError("http llm requires --llm-url")
    return HttpClient(config.llm_url, cassette=cassette)


def evaluate(config: RunConfig) -> EvalReport:
    """Run the full pipeline over the evaluation split and score VA/EX."""
    if config.dev is None:
        raise ValueError("evaluate requires a dev split")
    if config.train is None:
        raise ValueError("evaluate requires the training split the index was built from")
    started = time.monotonic()
    pipeline = _Pipeline(config)
    schemas = list(pipeline.schemas.values())
    train = load_examples(config.train, schemas)
    dev = load_examples(config.dev, schemas)
    index = SkeletonIndex.load(config.index)
    skeleton_texts = {
        entry.example_id: entry.skeleton_text
        for entry in (index.entry(i) for i in range(len(index)))
    }
    for ex in dev:
        pipeline.ensure_values(ex.db_id)

    params = CompletionParams(model=config.model)
    shared_llm = None
    if config.llm in ("replay", "http"):
        shared_llm = _make_llm(config, "")

    dump_dir = None
    if config.dump_relevance is not None:
        dump_dir = Path(config.dump_relevance)
        dump_dir.mkdir(parents=True, exist_ok=True)

    def run_one(idx: int) -> EvalRecord:
        ex = dev[idx]
        schema = pipeline.schema(ex.db_id)
        skeleton, bundle = pipeline.desemanticize(ex)
        query_vec = pipeline.backend.sentence_embed(skeleton.text)

        fetch = len(index) if config.exclude_same_db else config.k
        neighbors = index.search_knn(query_vec, fetch)
        if config.exclude_same_db:
            neighbors = [n for n in neighbors if train[n.example_id].db_id != ex.db_id]
        neighbors = neighbors[: config.k]

        demos = [
            DemonstrationExample(
                question=train[n.example_id].question_text,
                skeleton_text=skeleton_texts.get(n.example_id, ""),
                sql=train[n.example_id].gold_sql,
                db_id=train[n.example_id].db_id,
                similarity=n.similarity,
            )
            for n in neighbors
        ]
        filtered = filter_schema(schema, bundle.item_scores, config.theta, pipeline.values)
        llm = shared_llm if shared_llm is not None else _make_llm(config, ex.gold_sql)
        ctx = GenerationContext(
            schema=schema,
            filtered=filtered,
            demos=demos,
            values=pipeline.values,
            llm=llm,
            params=params,
            timeout=config.timeout,
        )
        outcome = generate_with_fallback(ex, ctx, config.max_fallbacks)

        va = outcome.final_sql is not None
        ex_flag = False
        if va:
            gold_result = execute_sql(schema, ex.gold_sql, config.timeout)
            if gold_result.status is ExecStatus.OK:
                ex_flag = exec_match(
                    outcome.final_result, gold_result, has_top_level_order_by(ex.gold_sql)
                )
        if dump_dir is not None:
            payload = bundle.to_dict()
            payload["question"] = ex.question_text
            payload["skeleton"] = skeleton.text
            (dump_dir / f"q{idx:04d}.json").write_text(
                json.dumps(payload), encoding="utf-8"
            )
        return EvalRecord(
            index=idx,
            db_id=ex.db_id,
            question=ex.question_text,
            skeleton=skeleton.text,
            retrieved=[{"example_id": n.example_id, "similarity": n.similarity}
                       for n in neighbors],
            kept_item_ids=sorted(filtered.kept_ids),
            final_sql=outcome.final_sql,
            attempts_count=outcome.attempts_count,
            fallback_used=outcome.fallback_used,
            va=va,
            ex=ex_flag,
        )

    def safe_run(idx: int) -> EvalRecord:
        try:
            return run_one(idx)
        except SkelSqlError as exc:
            logger.warning("question %d failed: %s", idx, exc)
            return EvalRecord(
                index=idx, db_id=dev[idx].db_id, question=dev[idx].question_text,
                skeleton="", retrieved=[], kept_item_ids=[], final_sql=None,
                attempts_count=0, fallback_used=False, va=False, ex=False,
                error=str(exc),
            )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(safe_run, range(len(dev))))
    else:
        records = [safe_run(i) for i in range(len(dev))]

    report = EvalReport.from_records(
        records, config.echo(), wall_time_s=time.monotonic() - started
    )
    if config.out is not None:
        write_report(report, config.out)
    return report


def write_report(report: EvalReport, out: str | Path) -> None:
    """One JSONL line per question plus a side-by-side summary JSON."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8") as fh:
        for record in report.records:
            fh.write(json.dumps(asdict(record)) + "\n")
    summary = {
        "va_rate": report.va_rate,
        "ex_rate": report.ex_rate,
        "questions": len(report.records),
        "wall_time_s": report.wall_time_s,
        "config": report.config,
    }
    summary_path = out.with_name(out.stem + ".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
