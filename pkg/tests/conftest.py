import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent / "fixtures"))

from mini_spider import materialize  # noqa: E402

from skelsql.encoder import ReferenceBackend  # noqa: E402
from skelsql.spider import ValueStore, load_examples, load_schemas, load_values  # noqa: E402


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini_spider")
    return materialize(root)


@pytest.fixture(scope="session")
def schemas(corpus):
    return {s.db_id: s for s in load_schemas(corpus["tables"], db_dir=corpus["db_dir"])}


@pytest.fixture(scope="session")
def values(schemas):
    store = ValueStore()
    for schema in schemas.values():
        load_values(schema, store=store)
    return store


@pytest.fixture(scope="session")
def dev_examples(corpus, schemas):
    return load_examples(corpus["dev"], list(schemas.values()))


@pytest.fixture(scope="session")
def train_examples(corpus, schemas):
    return load_examples(corpus["train"], list(schemas.values()))


@pytest.fixture(scope="session")
def backend():
    return ReferenceBackend()
