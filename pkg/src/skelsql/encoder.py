"""Encoder backends: schema-item representations, sentence embeddings, POS tags.

Two implementations share one interface: a deterministic hash-based reference
backend with no model dependencies, and an HTTP client for the sidecar service
that serves a real masked-language model.
"""

from __future__ import annotations

import hashlib
import re
import time
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

import numpy as np
import requests

from .errors import BackendUnavailable, DimensionMismatch

DEFAULT_DIM = 64
DEFAULT_SEED = 13

# Weight of a question token's contribution to a related schema item vector,
# relative to the item's own trigram base. Must be large enough that masking
# a related token moves the representation well clear of hash noise.
TOKEN_INFLUENCE = 2.0


class PosTag(str, Enum):
    NOUN = "noun"
    NUMBER = "number"
    OTHER = "other"


@dataclass(frozen=True)
class PosTagging:
    tags: tuple[PosTag, ...]

    def __len__(self) -> int:
        return len(self.tags)


@dataclass(frozen=True)
class EncodeRequest:
    """One encoding run: the question, the linearized schema texts, and an
    optional question-token index to mask out."""

    question_tokens: tuple[str, ...]
    schema_tokens: tuple[str, ...]
    masked_question_index: int | None = None

    def __post_init__(self):
        if not self.question_tokens:
            raise ValueError("question_tokens must be non-empty")
        if not self.schema_tokens:
            raise ValueError("schema_tokens must be non-empty")
        idx = self.masked_question_index
        if idx is not None and not 0 <= idx < len(self.question_tokens):
            raise ValueError(
                f"masked_question_index {idx} out of range for {len(self.question_tokens)} tokens"
            )


@dataclass
class SchemaRepresentations:
    """One vector per schema item, all of dimension ``dim``."""

    vectors: np.ndarray  # shape (|S|, dim)
    masked_index: int | None

    def __post_init__(self):
        if self.vectors.ndim != 2:
            raise DimensionMismatch(f"expected 2-d vector array, got {self.vectors.ndim}-d")
        if not np.all(np.isfinite(self.vectors)):
            raise DimensionMismatch("backend returned non-finite vectors")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


class EncoderBackend(Protocol):
    @property
    def dim(self) -> int: ...

    def encode(self, req: EncodeRequest) -> SchemaRepresentations: ...

    def sentence_embed(self, text: str) -> np.ndarray: ...

    def pos_tag(self, tokens: list[str]) -> PosTagging: ...


# ---------------------------------------------------------------------------
# Reference backend
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"^\d[\d,.:\-/]*$")

_FUNCTION_WORDS = frozenset(
    """
    a an the this that these those there here
    i me my mine we us our ours you your yours he him his she her hers
    it its they them their theirs who whom whose which what when where why how
    is am are was were be been being do does did done have has had having
    can could will would shall should may might must
    and or but nor not no none neither either if then else so as than because
    while although though unless until since
    of in on at by for with about against between into through during before
    after above below to from up down out off over under again further per via
    all each every some any both few many much more most other another such
    only own same just also ever never always often sometimes
    please give show list find tell return display
    """.split()
)


def hash_embedding(text: str, seed: int = DEFAULT_SEED, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Deterministic unit vector derived from a string via keyed blake2b expansion."""
    out: list[float] = []
    counter = 0
    while len(out) < dim:
        digest = hashlib.blake2b(
            f"{seed}:{counter}:{text}".encode("utf-8"), digest_size=64
        ).digest()
        for i in range(0, len(digest), 8):
            out.append(int.from_bytes(digest[i : i + 8], "little") / 2**63 - 1.0)
        counter += 1
    v = np.array(out[:dim], dtype=np.float64)
    return v / np.linalg.norm(v)


def char_trigrams(text: str) -> frozenset[str]:
    """Character trigrams of each whitespace-separated word (words shorter than 3 contribute none)."""
    grams = set()
    for word in text.lower().split():
        for i in range(len(word) - 2):
            grams.add(word[i : i + 3])
    return frozenset(grams)


class ReferenceBackend:
    """Deterministic trigram-hash backend.

    A schema item's vector is the unit-normalized sum of hash embeddings of
    its character trigrams, plus, for every unmasked question token, the
    token's hash embedding weighted by TOKEN_INFLUENCE times the number of
    trigrams it shares with the item. Masking a token therefore shifts
    exactly the items it shares a trigram with and leaves every other vector
    bit-identical.
    """

    def __init__(self, dim: int = DEFAULT_DIM, seed: int = DEFAULT_SEED):
        self._dim = dim
        self._seed = seed
        self._cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _vec(self, key: str) -> np.ndarray:
        v = self._cache.get(key)
        if v is None:
            v = hash_embedding(key, seed=self._seed, dim=self._dim)
            self._cache[key] = v
        return v

    def encode(self, req: EncodeRequest) -> SchemaRepresentations:
        vectors = np.empty((len(req.schema_tokens), self._dim), dtype=np.float64)
        for j, item_text in enumerate(req.schema_tokens):
            grams = char_trigrams(item_text)
            base = np.zeros(self._dim, dtype=np.float64)
            for g in sorted(grams):
                base += self._vec("g:" + g)
            norm = np.linalg.norm(base)
            if norm > 0:
                base /= norm
            for i, token in enumerate(req.question_tokens):
                if i == req.masked_question_index:
                    continue
                overlap = len(char_trigrams(token) & grams)
                if overlap:
                    base = base + (TOKEN_INFLUENCE * overlap) * self._vec("q:" + token)
            vectors[j] = base
        return SchemaRepresentations(vectors=vectors, masked_index=req.masked_question_index)

    def sentence_embed(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        if not tokens:
            raise ValueError("cannot embed empty text")
        v = np.zeros(self._dim, dtype=np.float64)
        for tok in tokens:
            v += self._vec("s:" + tok)
        for a, b in zip(tokens, tokens[1:]):
            v += self._vec(f"b:{a} {b}")
        return v / np.linalg.norm(v)

    def pos_tag(self, tokens: list[str]) -> PosTagging:
        if not tokens:
            raise ValueError("cannot tag an empty token list")
        tags = []
        for tok in tokens:
            low = tok.lower()
            if _NUMBER_RE.match(low):
                tags.append(PosTag.NUMBER)
            elif low in _FUNCTION_WORDS or not any(ch.isalnum() for ch in low):
                tags.append(PosTag.OTHER)
            else:
                tags.append(PosTag.NOUN)
        return PosTagging(tags=tuple(tags))


# ---------------------------------------------------------------------------
# Sidecar client
# ---------------------------------------------------------------------------

class SidecarBackend:
    """HTTP client for the encoder sidecar service.

    Each call retries transient failures sequentially; distinct calls may be
    issued concurrently.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        max_retries: int = 3,
        session: requests.Session | None = None,
    ):
        self._base_url = base_url.rstrip("/")
        self._timeout = timeout
        self._max_retries = max_retries
        self._session = session or requests.Session()
        self._dim: int | None = None

    @property
    def dim(self) -> int:
        if self._dim is None:
            info = self._post_or_get("GET", "/healthz", None)
            self._dim = int(info["dim"])
        return self._dim

    def _post_or_get(self, method: str, path: str, body: dict | None) -> dict:
        url = self._base_url + path
        last: Exception | None = None
        for attempt in range(self._max_retries + 1):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self._timeout)
                else:
                    resp = self._session.post(url, json=body, timeout=self._timeout)
                if resp.status_code == 503 and attempt < self._max_retries:
                    time.sleep(0.5 * (attempt + 1))
                    continue
                if resp.status_code >= 400:
                    raise BackendUnavailable(
                        f"sidecar {path} returned {resp.status_code}: {resp.text[:200]}"
                    )
                return resp.json()
            except requests.RequestException as exc:
                last = exc
                if attempt < self._max_retries:
                    time.sleep(0.5 * (attempt + 1))
                    continue
                raise BackendUnavailable(f"sidecar unreachable: {exc}") from exc
        raise BackendUnavailable(f"sidecar unreachable: {last}")

    def _check_dim(self, dim: int) -> None:
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise DimensionMismatch(f"sidecar returned dim {dim}, expected {self._dim}")

    def encode(self, req: EncodeRequest) -> SchemaRepresentations:
        body = {
            "question_tokens": list(req.question_tokens),
            "schema_tokens": list(req.schema_tokens),
            "masked_question_index": req.masked_question_index,
        }
        data = self._post_or_get("POST", "/embed_masked", body)
        vectors = np.asarray(data["vectors"], dtype=np.float64)
        self._check_dim(int(data["dim"]))
        if vectors.shape != (len(req.schema_tokens), self._dim):
            raise DimensionMismatch(
                f"sidecar returned shape {vectors.shape}, "
                f"expected ({len(req.schema_tokens)}, {self._dim})"
            )
        return SchemaRepresentations(vectors=vectors, masked_index=req.masked_question_index)

    def sentence_embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        data = self._post_or_get("POST", "/sentence_embed", {"text": text})
        v = np.asarray(data["vector"], dtype=np.float64)
        self._check_dim(v.shape[0])
        return v

    def pos_tag(self, tokens: list[str]) -> PosTagging:
        if not tokens:
            raise ValueError("cannot tag an empty token list")
        data = self._post_or_get("POST", "/pos", {"tokens": list(tokens)})
        return PosTagging(tags=tuple(PosTag(t) for t in data["tags"]))


def make_backend(name: str, sidecar_url: str | None = None, dim: int = DEFAULT_DIM,
                 seed: int = DEFAULT_SEED) -> EncoderBackend:
    if name == "reference":
        return ReferenceBackend(dim=dim, seed=seed)
    if name == "sidecar":
        if not sidecar_url:
            raise ValueError("--sidecar-url is required for the sidecar backend")
        return SidecarBackend(sidecar_url)
    raise ValueError(f"unknown backend {name!r}")
