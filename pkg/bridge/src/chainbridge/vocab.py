"""Word-level vocabulary and chain encoding.

A chain is presented to the model as a single token sequence::

    [CLS] <fact 1> [SEP] <fact 2> [SEP] <hypothesis>

with exactly two ``[SEP]`` boundaries and per-segment ids (0, 1, 2).

Delexicalized chains use single capital letters (X, Y, Z, W, U, V, T, S)
as entity variables.  Those letters are mapped to dedicated reserved
tokens before any vocabulary lookup, so a variable is always one token
and never falls back to ``[UNK]`` or collides with a learned word.  The
mapping is applied unconditionally: a bare capital X is not meaningful
sentence text in either representation, and keeping one tokenizer for
both makes surface and delexicalized checkpoints behave identically.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

PAD = "[PAD]"
UNK = "[UNK]"
CLS = "[CLS]"
SEP = "[SEP]"

#: Canonical variable alphabet, in order of first appearance.
VARIABLE_LETTERS = ("X", "Y", "Z", "W", "U", "V", "T", "S")

#: Reserved token for each variable letter.
VARIABLE_TOKENS = {
    letter: f"[VAR{i + 1}]" for i, letter in enumerate(VARIABLE_LETTERS)
}

RESERVED_TOKENS = [PAD, UNK, CLS, SEP] + [
    VARIABLE_TOKENS[letter] for letter in VARIABLE_LETTERS
]

_WORD_RE = re.compile(r"[A-Za-z0-9']+")


def tokenize(text: str) -> list[str]:
    """Split ``text`` into word tokens.

    A whitespace-delimited bare variable letter (edge punctuation
    aside) becomes its reserved token; a capital letter embedded in a
    larger word — "X-rays" — is ordinary text.  Everything else is
    lowercased with punctuation dropped.
    """
    tokens: list[str] = []
    for chunk in text.split():
        core = chunk.strip(string.punctuation)
        if core in VARIABLE_TOKENS:
            tokens.append(VARIABLE_TOKENS[core])
            continue
        tokens.extend(word.lower() for word in _WORD_RE.findall(chunk))
    return tokens


@dataclass(frozen=True)
class EncodedChain:
    """A chain rendered as fixed-length model inputs."""

    input_ids: tuple[int, ...]
    segment_ids: tuple[int, ...]
    attention_mask: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (
            len(self.input_ids) == len(self.segment_ids) == len(self.attention_mask)
        ):
            raise ValueError("encoded chain fields must have equal length")


class Vocab:
    """Immutable token-to-id mapping with a fixed reserved prefix."""

    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self._tokens = list(tokens)
        self._ids = {token: i for i, token in enumerate(self._tokens)}
        if len(self._ids) != len(self._tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    @property
    def cls_id(self) -> int:
        return self._ids[CLS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def token_of(self, index: int) -> str:
        return self._tokens[index]

    def encode_text(self, text: str) -> list[int]:
        return [self.id_of(token) for token in tokenize(text)]

    @classmethod
    def build(cls, texts: Iterable[str], min_count: int = 1) -> "Vocab":
        """Build a vocabulary from raw sentences.

        Words are counted after tokenization (so variable letters never
        enter the learned part) and kept when seen at least
        ``min_count`` times, ordered by descending count then
        alphabetically for a stable layout.
        """
        counts: Counter[str] = Counter()
        for text in texts:
            for token in tokenize(text):
                if token not in VARIABLE_TOKENS.values():
                    counts[token] += 1
        learned = sorted(
            (token for token, count in counts.items() if count >= min_count),
            key=lambda token: (-counts[token], token),
        )
        return cls(RESERVED_TOKENS + learned)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(f"{token}\n" for token in self._tokens), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        tokens = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tokens)


def encode_chain(
    vocab: Vocab, f1: str, f2: str, hypothesis: str, max_len: int = 64
) -> EncodedChain:
    """Encode one chain as ``[CLS] f1 [SEP] f2 [SEP] hypothesis``.

    The result always contains exactly two separators.  When the chain
    is too long, tokens are dropped from the tail of the longest
    segment until it fits, so the structure survives truncation.  The
    sequence is padded to ``max_len`` with an attention mask marking
    real tokens.
    """
    if max_len < 5:
        raise ValueError("max_len must be at least 5 to hold the chain structure")
    segments = [vocab.encode_text(f1), vocab.encode_text(f2), vocab.encode_text(hypothesis)]
    budget = max_len - 3  # [CLS] and two [SEP]s
    while sum(len(seg) for seg in segments) > budget:
        longest = max(range(3), key=lambda i: (len(segments[i]), i))
        segments[longest] = segments[longest][:-1]

    input_ids = [vocab.cls_id] + segments[0] + [vocab.sep_id]
    segment_ids = [0] * len(input_ids)
    input_ids += segments[1] + [vocab.sep_id]
    segment_ids += [1] * (len(segments[1]) + 1)
    input_ids += segments[2]
    segment_ids += [2] * len(segments[2])

    attention_mask = [1] * len(input_ids)
    padding = max_len - len(input_ids)
    input_ids += [vocab.pad_id] * padding
    segment_ids += [0] * padding
    attention_mask += [0] * padding
    return EncodedChain(
        input_ids=tuple(input_ids),
        segment_ids=tuple(segment_ids),
        attention_mask=tuple(attention_mask),
    )
