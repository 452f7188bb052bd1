"""Question de-semanticization: relate question tokens to schema items and
mask the schema-bound ones, leaving an intention skeleton.

Token-to-item relevance combines two signals: the representation shift a
schema item suffers when a question token is masked out (measured as a
Poincaré distance between hyperbolic projections), and rule-based name/value
matching. A POS prior boosts nouns and numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncodeRequest, EncoderBackend, PosTag, PosTagging
from .errors import ShapeMismatch
from .hyperbolic import poincare_distance, project_hyperbolic
from .spider import DatabaseSchema, Example, ItemKind, ValueStore

MASK_TOKEN = "[MASK]"

DEFAULT_ALPHA = 0.9
DEFAULT_BETA = 0.5
DEFAULT_TAU = 0.6

# How many sample cell values are folded into a column's text representation
# when encoding the schema. Sample values are what tie a value-mentioning
# question token (e.g. a nationality) to its column.
ENRICH_VALUE_CAP = 5


@dataclass
class QuestionSkeleton:
    tokens: list[str]
    masked_positions: frozenset[int]
    source_question: Example

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass
class RelevanceBundle:
    """All per-question relevance artifacts, shapes |Q| x |S| (matrices),
    |Q| (pos_prior, token_scores) and |S| (item_scores)."""

    shift: np.ndarray        # masking-induced distance per (token, item)
    shift_norm: np.ndarray   # the same, min-max normalized to [0, 1]
    match: np.ndarray        # lexical name/value match scores in {0, 1, 2}
    relevance: np.ndarray    # shift_norm + beta * match
    pos_prior: np.ndarray    # alpha for nouns/numbers, else 0
    token_scores: np.ndarray
    item_scores: np.ndarray

    def to_dict(self) -> dict:
        return {
            "shift": self.shift.tolist(),
            "shift_norm": self.shift_norm.tolist(),
            "match": self.match.astype(int).tolist(),
            "relevance": self.relevance.tolist(),
            "pos_prior": self.pos_prior.tolist(),
            "token_scores": self.token_scores.tolist(),
            "item_scores": self.item_scores.tolist(),
        }


def schema_item_texts(
    schema: DatabaseSchema,
    values: ValueStore | None = None,
    value_cap: int = ENRICH_VALUE_CAP,
) -> list[str]:
    """Text representation of each schema item, in linearization order.

    Tables carry their column names, columns carry a few sample cell values;
    both give the encoder lexical context beyond the bare identifier.
    """
    texts = []
    for item in schema.items:
        if item.kind is ItemKind.TABLE:
            parts = [item.name] + [c.name for c in schema.columns_of(item.id)]
        else:
            parts = [item.name]
            if values is not None:
                parts.extend(sorted(values.get(schema.db_id, item.id))[:value_cap])
        texts.append(" ".join(parts))
    return texts


def build_shift_matrix(
    question: Example,
    schema: DatabaseSchema,
    backend: EncoderBackend,
    values: ValueStore | None = None,
) -> np.ndarray:
    """|Q| x |S| matrix of Poincaré distances between each schema item's
    representation with and without each question token masked out.

    Runs the backend exactly |Q| + 1 times: one unmasked pass plus one pass
    per masked token.
    """
    tokens = tuple(question.question_tokens)
    item_texts = tuple(schema_item_texts(schema, values))
    unmasked = backend.encode(EncodeRequest(tokens, item_texts, None))
    base = [project_hyperbolic(v) for v in unmasked.vectors]

    shift = np.zeros((len(tokens), len(item_texts)), dtype=np.float64)
    for i in range(len(tokens)):
        masked = backend.encode(EncodeRequest(tokens, item_texts, i))
        for j in range(len(item_texts)):
            if np.array_equal(masked.vectors[j], unmasked.vectors[j]):
                continue  # untouched item: distance is exactly 0
            shift[i, j] = poincare_distance(project_hyperbolic(masked.vectors[j]), base[j])
    return shift


def build_matching_matrix(
    question: Example, schema: DatabaseSchema, values: ValueStore
) -> np.ndarray:
    """|Q| x |S| rule-based match matrix with entries in {0, 1, 2}:
    one point if a token span containing the token equals the item name,
    one point if the token equals a cell value of the column."""
    tokens = question.question_tokens
    n_q, n_s = len(tokens), len(schema.items)
    name_match = np.zeros((n_q, n_s), dtype=np.int64)
    value_match = np.zeros((n_q, n_s), dtype=np.int64)

    for j, item in enumerate(schema.items):
        words = item.name.split()
        width = len(words)
        if width and width <= n_q:
            for start in range(n_q - width + 1):
                if tokens[start : start + width] == words:
                    name_match[start : start + width, j] = 1
        if item.kind is ItemKind.COLUMN:
            vals = values.get(schema.db_id, item.id)
            if vals:
                for i, tok in enumerate(tokens):
                    if tok in vals:
                        value_match[i, j] = 1

    return (name_match + value_match).astype(np.float64)


def minmax_normalize(matrix: np.ndarray) -> np.ndarray:
    """Min-max normalize over the whole matrix; a constant matrix maps to zeros."""
    lo = float(matrix.min())
    hi = float(matrix.max())
    if hi == lo:
        return np.zeros_like(matrix, dtype=np.float64)
    return (matrix - lo) / (hi - lo)


def fuse_relevance(shift: np.ndarray, match: np.ndarray, beta: float = DEFAULT_BETA) -> np.ndarray:
    """Combine the two signals: minmax(shift) + beta * match, elementwise."""
    if shift.shape != match.shape:
        raise ShapeMismatch(f"shift {shift.shape} vs match {match.shape}")
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return minmax_normalize(shift) + beta * match


def pos_vector(tags: PosTagging, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """alpha for nouns and numbers, 0 otherwise."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return np.array(
        [alpha if t in (PosTag.NOUN, PosTag.NUMBER) else 0.0 for t in tags.tags],
        dtype=np.float64,
    )


def question_scores(relevance: np.ndarray, pos_prior: np.ndarray) -> np.ndarray:
    """Per-token score: the mean of the token's relevance row averaged with
    its POS prior."""
    if relevance.ndim != 2 or pos_prior.ndim != 1 or relevance.shape[0] != pos_prior.shape[0]:
        raise ShapeMismatch(f"relevance {relevance.shape} vs prior {pos_prior.shape}")
    return 0.5 * (relevance.mean(axis=1) + pos_prior)


def make_skeleton(
    question: Example, token_scores: np.ndarray, tau: float = DEFAULT_TAU
) -> QuestionSkeleton:
    """Replace each token scoring at or above tau with one [MASK] token."""
    if len(token_scores) != len(question.question_tokens):
        raise ShapeMismatch(
            f"{len(token_scores)} scores for {len(question.question_tokens)} tokens"
        )
    tokens = []
    masked = set()
    for i, tok in enumerate(question.question_tokens):
        if token_scores[i] < tau:
            tokens.append(tok)
        else:
            tokens.append(MASK_TOKEN)
            masked.add(i)
    return QuestionSkeleton(
        tokens=tokens, masked_positions=frozenset(masked), source_question=question
    )


def schema_item_scores(relevance: np.ndarray) -> np.ndarray:
    """Per-item relevance in [0, 1]: column max, then min-max over items."""
    if relevance.size == 0:
        raise ShapeMismatch("empty relevance matrix")
    per_item = relevance.max(axis=0)
    lo, hi = float(per_item.min()), float(per_item.max())
    if hi == lo:
        return np.zeros_like(per_item)
    return (per_item - lo) / (hi - lo)


def desemanticize(
    question: Example,
    schema: DatabaseSchema,
    backend: EncoderBackend,
    values: ValueStore,
    alpha: float = DEFAULT_ALPHA,
    beta: float = DEFAULT_BETA,
    tau: float = DEFAULT_TAU,
) -> tuple[QuestionSkeleton, RelevanceBundle]:
    """Full de-semanticization of one question against its schema."""
    shift = build_shift_matrix(question, schema, backend, values)
    match = build_matching_matrix(question, schema, values)
    shift_norm = minmax_normalize(shift)
    relevance = shift_norm + beta * match
    tags = backend.pos_tag(question.question_tokens)
    pos_prior = pos_vector(tags, alpha)
    token_scores = question_scores(relevance, pos_prior)
    skeleton = make_skeleton(question, token_scores, tau)
    bundle = RelevanceBundle(
        shift=shift, shift_norm=shift_norm, match=match, relevance=relevance,
        pos_prior=pos_prior, token_scores=token_scores,
        item_scores=schema_item_scores(relevance),
    )
    return skeleton, bundle
