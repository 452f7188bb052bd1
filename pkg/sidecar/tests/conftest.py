import socket
import sys
import threading
import time
from pathlib import Path

import pytest
import uvicorn

# the primary package's bundled mini corpus
sys.path.insert(0, str(Path(__file__).resolve().parents[2] / "tests" / "fixtures"))

from encoder_sidecar.model import build_tiny_model  # noqa: E402
from encoder_sidecar.service import create_app  # noqa: E402


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    return build_tiny_model(tmp_path_factory.mktemp("model") / "tiny-mlm")


@pytest.fixture(scope="session")
def app(model_dir):
    return create_app(model_path=model_dir)


@pytest.fixture(scope="session")
def client(app):
    from fastapi.testclient import TestClient

    with TestClient(app) as test_client:
        yield test_client


@pytest.fixture(scope="session")
def server_url(app):
    """The app served over real HTTP on a local port."""
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 15
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("sidecar server failed to start")
        time.sleep(0.05)
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    from mini_spider import materialize

    return materialize(tmp_path_factory.mktemp("mini_spider"))
