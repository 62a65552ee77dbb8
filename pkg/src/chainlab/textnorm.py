"""Text normalization shared by every stage: tokenize, stop, stem.

All matching in the toolkit (retrieval overlap, entity detection, scoring
queries) runs on the output of these functions, so they are deliberately
small and deterministic: Unicode word tokens, lowercasing, a fixed shipped
stopword list, and Porter stemming.
"""

from __future__ import annotations

import os
import re
from functools import lru_cache
from importlib import resources

from .stem import stem

# Word characters minus underscore; keeps digits, splits on everything else.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

STOPWORDS_VERSION = 1
STOPWORDS_ENV_VAR = "CHAINLAB_STOPWORDS"


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens in order of appearance."""
    return _TOKEN_RE.findall(text.lower())


def tokenize_cased(text: str) -> list[str]:
    """Word tokens with original casing preserved (used for templates)."""
    return _TOKEN_RE.findall(text)


def normalize_text(text: str) -> str:
    """Canonical form used for deduplication and stable fact ids."""
    return " ".join(tokenize(text))


def _parse_stopword_lines(lines) -> frozenset[str]:
    words = set()
    for line in lines:
        word = line.strip()
        if word and not word.startswith("#"):
            words.add(word.lower())
    return frozenset(words)


@lru_cache(maxsize=None)
def _load_stopwords(path: str | None) -> frozenset[str]:
    if path is None:
        text = resources.files("chainlab.data").joinpath("stopwords.txt").read_text("utf-8")
        return _parse_stopword_lines(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return _parse_stopword_lines(fh)


def get_stopwords() -> frozenset[str]:
    """The active stopword list.

    Defaults to the shipped list (version ``STOPWORDS_VERSION``); the
    ``CHAINLAB_STOPWORDS`` environment variable overrides it with a path to
    a one-word-per-line file.
    """
    return _load_stopwords(os.environ.get(STOPWORDS_ENV_VAR))


def content_terms(text: str) -> list[str]:
    """Stemmed non-stopword tokens, in order, duplicates kept."""
    stops = get_stopwords()
    return [stem(tok) for tok in tokenize(text) if tok not in stops]


def content_word_set(text: str) -> frozenset[str]:
    """Set of stemmed non-stopword tokens; the unit of all overlap tests."""
    return frozenset(content_terms(text))
