"""Rule-based POS tagging with the coarse tagset the pipeline consumes.

The internal tagset distinguishes determiners, pronouns, prepositions,
auxiliaries, conjunctions, numerals, punctuation and nominals; everything is
mapped down to {noun, number, other} on the wire.
"""

from __future__ import annotations

import re

_NUMBER_RE = re.compile(r"^\d[\d,.:\-/]*$")

_CLOSED_CLASS = {
    "DET": {"a", "an", "the", "this", "that", "these", "those", "each", "every",
            "some", "any", "no", "all", "both", "few", "many", "much", "more",
            "most", "other", "another", "such", "own", "same"},
    "PRON": {"i", "me", "my", "mine", "we", "us", "our", "ours", "you", "your",
             "yours", "he", "him", "his", "she", "her", "hers", "it", "its",
             "they", "them", "their", "theirs", "who", "whom", "whose", "which",
             "what"},
    "ADP": {"of", "in", "on", "at", "by", "for", "with", "about", "against",
            "between", "into", "through", "during", "before", "after", "above",
            "below", "to", "from", "up", "down", "out", "off", "over", "under",
            "per", "via"},
    "AUX": {"is", "am", "are", "was", "were", "be", "been", "being", "do",
            "does", "did", "done", "have", "has", "had", "having", "can",
            "could", "will", "would", "shall", "should", "may", "might", "must"},
    "CONJ": {"and", "or", "but", "nor", "so", "than", "then", "if", "else",
             "because", "while", "although", "though", "unless", "until",
             "since", "as"},
    "ADV": {"when", "where", "why", "how", "not", "never", "always", "often",
            "again", "further", "here", "there", "just", "also", "only",
            "ever", "sometimes", "very", "too"},
    "VERB": {"please", "give", "show", "list", "find", "tell", "return",
             "display"},
}

_WORD_TO_TAG = {w: tag for tag, words in _CLOSED_CLASS.items() for w in words}

_TO_COARSE = {
    "NUM": "number",
    "NOUN": "noun",
    "DET": "other",
    "PRON": "other",
    "ADP": "other",
    "AUX": "other",
    "CONJ": "other",
    "ADV": "other",
    "VERB": "other",
    "PUNCT": "other",
}


def fine_tag(token: str) -> str:
    low = token.lower()
    if _NUMBER_RE.match(low):
        return "NUM"
    if not any(ch.isalnum() for ch in low):
        return "PUNCT"
    return _WORD_TO_TAG.get(low, "NOUN")


def tag_tokens(tokens: list[str]) -> list[str]:
    return [_TO_COARSE[fine_tag(t)] for t in tokens]
