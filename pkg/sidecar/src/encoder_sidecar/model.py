"""Model loading and the encoding operations the service exposes.

The encoder is any BERT-style transformer directory loadable by
``transformers``. When none is configured, a small seeded model is built
offline and cached, so the service runs without downloading weights.
"""

from __future__ import annotations

import logging
import threading
from pathlib import Path

import torch
from transformers import AutoModel, AutoTokenizer, BertConfig, BertModel

logger = logging.getLogger("encoder_sidecar")

DEFAULT_CACHE = Path.home() / ".cache" / "encoder_sidecar" / "tiny-mlm"
TINY_SEED = 7

_TINY_CORPUS = [
    "what are the names of the singers who are not french",
    "how many singers do we have",
    "show the name of each singer ordered by singer id",
    "singer singer id name citizenship concert theme audience",
    "owner pet shop species price city dog cat parrot hamster",
    "how many pets are there and what is the average price",
    "author book library title year pages country",
    "what are the titles of books published after the year",
    "select count sum avg max min from where group order by",
    "list all values which table column database query question",
    "the quick brown fox jumps over the lazy dog",
    "numbers one two three four five six seven eight nine ten 0 1 2 3 4 5",
]


def build_tiny_model(target: str | Path, seed: int = TINY_SEED) -> Path:
    """Materialize a small deterministic BERT encoder and WordPiece tokenizer."""
    from tokenizers import Tokenizer, models, normalizers, pre_tokenizers, trainers
    from transformers import PreTrainedTokenizerFast

    target = Path(target)
    if (target / "config.json").exists():
        return target
    target.mkdir(parents=True, exist_ok=True)

    tok = Tokenizer(models.WordPiece(unk_token="[UNK]"))
    tok.normalizer = normalizers.BertNormalizer(lowercase=True)
    tok.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    trainer = trainers.WordPieceTrainer(
        vocab_size=2000,
        special_tokens=["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"],
    )
    tok.train_from_iterator(sorted(_TINY_CORPUS), trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        unk_token="[UNK]",
        pad_token="[PAD]",
        cls_token="[CLS]",
        sep_token="[SEP]",
        mask_token="[MASK]",
    )

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(fast),
        hidden_size=64,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=128,
        max_position_embeddings=512,
    )
    model = BertModel(config)
    model.eval()
    model.save_pretrained(target)
    fast.save_pretrained(target)
    logger.info("built tiny encoder at %s (dim=%d)", target, config.hidden_size)
    return target


class MlmEncoder:
    """Wraps the transformer: masked schema encoding, sentence embedding.

    Inference is serialized with a lock; outputs for identical inputs are
    bit-identical because the model runs in eval mode with no sampling.
    """

    def __init__(self, model_path: str | Path):
        self._lock = threading.Lock()
        self.tokenizer = AutoTokenizer.from_pretrained(str(model_path))
        self.model = AutoModel.from_pretrained(str(model_path))
        self.model.eval()
        self.dim = int(self.model.config.hidden_size)
        self.name = Path(str(model_path)).name

    def _forward(self, ids: list[int]) -> torch.Tensor:
        with self._lock, torch.no_grad():
            out = self.model(torch.tensor([ids], dtype=torch.long))
        return out.last_hidden_state[0]

    def _word_ids(self, word: str) -> list[int]:
        ids = self.tokenizer.encode(word, add_special_tokens=False)
        if not ids:
            ids = [self.tokenizer.unk_token_id]
        return ids

    def embed_masked(
        self,
        question_tokens: list[str],
        schema_tokens: list[str],
        masked_question_index: int | None,
    ) -> list[list[float]]:
        """One vector per schema item: last-layer mean pooling over the item's
        subtokens in the concatenated question+schema sequence. When an index
        is given, that question token's subtokens are replaced by one mask
        token."""
        cls = self.tokenizer.cls_token_id
        sep = self.tokenizer.sep_token_id
        mask = self.tokenizer.mask_token_id

        ids: list[int] = [cls]
        for i, token in enumerate(question_tokens):
            if i == masked_question_index:
                ids.append(mask)
            else:
                ids.extend(self._word_ids(token))
        ids.append(sep)

        spans: list[tuple[int, int]] = []
        ids.append(cls)
        for item in schema_tokens:
            start = len(ids)
            ids.extend(self._word_ids(item))
            spans.append((start, len(ids)))
        ids.append(cls)

        hidden = self._forward(ids)
        vectors = []
        for start, end in spans:
            vectors.append(hidden[start:end].mean(dim=0).tolist())
        return vectors

    def sentence_embed(self, text: str) -> list[float]:
        ids = self.tokenizer.encode(text, add_special_tokens=False)
        if not ids:
            ids = [self.tokenizer.unk_token_id]
        full = [self.tokenizer.cls_token_id] + ids + [self.tokenizer.sep_token_id]
        hidden = self._forward(full)
        pooled = hidden[1:-1].mean(dim=0)
        norm = torch.linalg.vector_norm(pooled)
        if float(norm) == 0.0:
            pooled = torch.zeros_like(pooled)
            pooled[0] = 1.0
            return pooled.tolist()
        return (pooled / norm).tolist()
