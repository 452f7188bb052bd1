"""FastAPI application exposing the encoder over HTTP."""

from __future__ import annotations

import logging
import os
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .model import DEFAULT_CACHE, MlmEncoder, build_tiny_model
from .tagger import tag_tokens

logger = logging.getLogger("encoder_sidecar")

MODEL_ENV = "SIDECAR_MODEL"
PORT_ENV = "SIDECAR_PORT"


class EmbedMaskedRequest(BaseModel):
    question_tokens: list[str]
    schema_tokens: list[str]
    masked_question_index: int | None = None


class SentenceEmbedRequest(BaseModel):
    text: str


class PosRequest(BaseModel):
    tokens: list[str]


def resolve_model_path() -> Path:
    configured = os.environ.get(MODEL_ENV)
    if configured:
        return Path(configured)
    return build_tiny_model(DEFAULT_CACHE)


def create_app(model_path: str | Path | None = None, preload: bool = True) -> FastAPI:
    app = FastAPI(title="encoder-sidecar")
    app.state.encoder = None
    app.state.load_lock = threading.Lock()

    def load() -> None:
        path = Path(model_path) if model_path is not None else resolve_model_path()
        encoder = MlmEncoder(path)
        with app.state.load_lock:
            app.state.encoder = encoder
        logger.info("model %s ready (dim=%d)", encoder.name, encoder.dim)

    if preload:
        load()
    else:
        threading.Thread(target=load, daemon=True).start()

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def encoder() -> MlmEncoder:
        enc = app.state.encoder
        if enc is None:
            raise HTTPException(status_code=503, detail="model is loading")
        return enc

    @app.get("/healthz")
    def healthz():
        enc = encoder()
        return {"dim": enc.dim, "model_name": enc.name}

    @app.post("/embed_masked")
    def embed_masked(body: EmbedMaskedRequest):
        enc = encoder()
        if not body.question_tokens or not body.schema_tokens:
            raise HTTPException(status_code=400, detail="empty token lists")
        idx = body.masked_question_index
        if idx is not None and not 0 <= idx < len(body.question_tokens):
            raise HTTPException(
                status_code=422,
                detail=f"masked_question_index {idx} out of range "
                       f"for {len(body.question_tokens)} tokens",
            )
        vectors = enc.embed_masked(body.question_tokens, body.schema_tokens, idx)
        return {"vectors": vectors, "dim": enc.dim}

    @app.post("/sentence_embed")
    def sentence_embed(body: SentenceEmbedRequest):
        enc = encoder()
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="empty text")
        return {"vector": enc.sentence_embed(body.text)}

    @app.post("/pos")
    def pos(body: PosRequest):
        encoder()  # surface 503 while loading, tagging itself is model-free
        if not body.tokens:
            raise HTTPException(status_code=400, detail="empty token list")
        return {"tags": tag_tokens(body.tokens)}

    return app
