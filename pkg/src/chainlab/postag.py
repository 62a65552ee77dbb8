"""Coarse part-of-speech tagging over word tokens.

Five tags — NOUN, ADJ, DET, VERB, OTHER — resolved per token by: shipped
most-frequent-tag lexicon, then suffix heuristics, then NOUN as the default
for unknown content words. That bias is deliberate: downstream entity
detection only cares about noun groups and the determiners/adjectives in
front of them. Pass a custom lexicon (mapping or file path) to ``Tagger``
to swap the vocabulary out.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from .textnorm import tokenize_cased

NOUN = "NOUN"
ADJ = "ADJ"
DET = "DET"
VERB = "VERB"
OTHER = "OTHER"
TAGS = (NOUN, ADJ, DET, VERB, OTHER)

LEXICON_VERSION = 1


@dataclass(frozen=True)
class PosTaggedSentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )


def _parse_lexicon_lines(lines) -> dict[str, str]:
    lexicon: dict[str, str] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            word, tag = line.split("\t")
        except ValueError:
            raise ValueError(f"lexicon line {lineno}: expected word<TAB>tag, got {line!r}")
        if tag not in TAGS:
            raise ValueError(f"lexicon line {lineno}: unknown tag {tag!r}")
        lexicon[word.lower()] = tag
    return lexicon


@lru_cache(maxsize=1)
def _default_lexicon() -> dict[str, str]:
    text = resources.files("chainlab.data").joinpath("tag_lexicon.txt").read_text("utf-8")
    return _parse_lexicon_lines(text.splitlines())


def _suffix_tag(word: str) -> str:
    if word[0].isdigit():
        return OTHER
    n = len(word)
    if word.endswith("ly") and n >= 5:
        return OTHER
    if word.endswith("ed") and n >= 4 and not word.endswith("eed"):
        return VERB
    if word.endswith("ing") and n >= 5:
        return VERB
    if word.endswith(("ous", "ful", "ive", "less")) and n >= 5:
        return ADJ
    if word.endswith(("able", "ible")) and n >= 6:
        return ADJ
    if word.endswith("ic") and n >= 4:
        return ADJ
    return NOUN


class Tagger:
    """Lexicon + suffix-heuristic tagger. Stateless after construction."""

    def __init__(self, lexicon: Mapping[str, str] | str | None = None):
        if lexicon is None:
            self._lexicon = _default_lexicon()
        elif isinstance(lexicon, str):
            with open(lexicon, encoding="utf-8") as fh:
                self._lexicon = _parse_lexicon_lines(fh)
        else:
            self._lexicon = {w.lower(): t for w, t in lexicon.items()}
            for tag in self._lexicon.values():
                if tag not in TAGS:
                    raise ValueError(f"unknown tag {tag!r}")

    def tag_word(self, word: str) -> str:
        known = self._lexicon.get(word.lower())
        if known is not None:
            return known
        return _suffix_tag(word.lower())

    def tag_tokens(self, tokens) -> tuple[str, ...]:
        return tuple(self.tag_word(tok) for tok in tokens)

    def tag(self, sentence: str) -> PosTaggedSentence:
        tokens = tuple(tokenize_cased(sentence))
        if not tokens:
            raise ValueError(f"empty sentence: {sentence!r}")
        return PosTaggedSentence(tokens=tokens, tags=self.tag_tokens(tokens))


@lru_cache(maxsize=1)
def default_tagger() -> Tagger:
    return Tagger()


def tag(sentence: str) -> PosTaggedSentence:
    """Tag with the shipped lexicon."""
    return default_tagger().tag(sentence)
