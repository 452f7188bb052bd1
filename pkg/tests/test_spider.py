import dataclasses
import json

import pytest

from skelsql.errors import (
    FileMissing,
    MalformedExample,
    MalformedSchema,
    NotAColumn,
    UnknownDbId,
)
from skelsql.spider import (
    ItemKind,
    column_values,
    load_examples,
    load_schemas,
    load_values,
    tokenize,
)


def write_tables(tmp_path, entries):
    path = tmp_path / "tables.json"
    path.write_text(json.dumps(entries))
    return path


ONE_DB = [
    {
        "db_id": "toy",
        "table_names_original": ["singer"],
        "column_names_original": [[-1, "*"], [0, "id"], [0, "name"]],
        "column_types": ["text", "number", "text"],
        "primary_keys": [1],
        "foreign_keys": [],
    }
]


class TestLoadSchemas:
    def test_one_db_linearization(self, tmp_path):
        schemas = load_schemas(write_tables(tmp_path, ONE_DB))
        assert len(schemas) == 1
        schema = schemas[0]
        assert [it.name for it in schema.items] == ["singer", "id", "name"]
        assert len(schema.tables) == 1
        assert len(schema.columns) == 2
        assert all(it.id == i for i, it in enumerate(schema.items))

    def test_empty_array(self, tmp_path):
        assert load_schemas(write_tables(tmp_path, [])) == []

    def test_column_table_index_out_of_range(self, tmp_path):
        bad = json.loads(json.dumps(ONE_DB))
        bad[0]["column_names_original"].append([7, "ghost"])
        with pytest.raises(MalformedSchema):
            load_schemas(write_tables(tmp_path, bad))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileMissing):
            load_schemas(tmp_path / "nope.json")

    def test_sorted_by_db_id(self, corpus):
        schemas = load_schemas(corpus["tables"])
        assert [s.db_id for s in schemas] == sorted(s.db_id for s in schemas)

    def test_length_is_tables_plus_columns(self, schemas):
        for schema in schemas.values():
            assert len(schema.items) == len(schema.tables) + len(schema.columns)

    def test_columns_reference_existing_tables(self, schemas):
        for schema in schemas.values():
            table_ids = {t.id for t in schema.tables}
            for col in schema.columns:
                assert col.parent_table in table_ids

    def test_foreign_key_resolved(self, schemas):
        pet = schemas["pet_shop"]
        fk_cols = [c for c in pet.columns if c.foreign_key_to is not None]
        assert len(fk_cols) == 1
        target = pet.items[fk_cols[0].foreign_key_to]
        assert target.kind is ItemKind.COLUMN
        assert target.name == "owner id"
        assert pet.items[target.parent_table].name == "owner"

    def test_deterministic_load(self, corpus):
        first = load_schemas(corpus["tables"], db_dir=corpus["db_dir"])
        second = load_schemas(corpus["tables"], db_dir=corpus["db_dir"])
        as_json = lambda ss: json.dumps(  # noqa: E731
            [dataclasses.asdict(s) for s in ss], default=str, sort_keys=True
        )
        assert as_json(first) == as_json(second)


class TestTokenizer:
    def test_trailing_question_mark(self):
        assert tokenize("How many singers do we have?") == [
            "how", "many", "singers", "do", "we", "have", "?",
        ]

    def test_leading_and_trailing_punctuation(self):
        assert tokenize("'hello,' she said.") == ["'", "hello", ",", "'", "she", "said", "."]

    def test_interior_punctuation_kept(self):
        assert tokenize("don't stop at 1,000") == ["don't", "stop", "at", "1,000"]

    def test_rejoin_matches_normalized_text(self, dev_examples):
        for ex in dev_examples:
            assert " ".join(ex.question_tokens) == ex.normalized_question


class TestLoadExamples:
    def test_file_order_preserved(self, corpus, schemas):
        examples = load_examples(corpus["dev"], list(schemas.values()))
        raw = json.loads(corpus["dev"].read_text())
        assert [e.question_text for e in examples] == [r["question"] for r in raw]

    def test_unknown_db_id(self, tmp_path, schemas):
        path = tmp_path / "ex.json"
        path.write_text(json.dumps([
            {"db_id": "nosuchdb", "question": "hi there?", "query": "SELECT 1"}
        ]))
        with pytest.raises(UnknownDbId):
            load_examples(path, list(schemas.values()))

    def test_empty_question(self, tmp_path, schemas):
        path = tmp_path / "ex.json"
        path.write_text(json.dumps([
            {"db_id": "concert_singer", "question": "  ", "query": "SELECT 1"}
        ]))
        with pytest.raises(MalformedExample):
            load_examples(path, list(schemas.values()))


class TestColumnValues:
    def test_distinct_lowercase(self, schemas):
        singer = schemas["concert_singer"]
        citizenship = next(c for c in singer.columns if c.name == "citizenship")
        vals = column_values(singer, citizenship)
        assert vals == {"french", "english", "dutch"}

    def test_cap_is_ascending_prefix(self, schemas):
        singer = schemas["concert_singer"]
        citizenship = next(c for c in singer.columns if c.name == "citizenship")
        assert column_values(singer, citizenship, cap=1) == {"dutch"}
        assert column_values(singer, citizenship, cap=2) == {"dutch", "english"}

    def test_table_item_rejected(self, schemas):
        singer = schemas["concert_singer"]
        with pytest.raises(NotAColumn):
            column_values(singer, singer.tables[0])

    def test_store_only_holds_schema_columns(self, schemas):
        singer = schemas["concert_singer"]
        store = load_values(singer)
        column_ids = {c.id for c in singer.columns}
        for db_id, col_id in store.values:
            assert db_id == singer.db_id
            assert col_id in column_ids
