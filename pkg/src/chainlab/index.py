"""In-process BM25 index over a sentence corpus.

Facts get content-derived ids (truncated SHA-1 of the normalized text) so an
index is a pure function of the input multiset of sentences: build order
never changes ids, scores, or tie-breaks. All ranking ties break by fact id
ascending.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field

from .textnorm import (
    STOPWORDS_VERSION,
    content_terms,
    content_word_set,
    normalize_text,
    tokenize,
)

log = logging.getLogger(__name__)

INDEX_MAGIC = "chainlab-index"
INDEX_VERSION = 1

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def fact_id_for(text: str) -> str:
    """Stable 16-hex-digit id derived from the normalized sentence text."""
    norm = normalize_text(text)
    return hashlib.sha1(norm.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Fact:
    """One corpus sentence with its normalized views."""

    id: str
    text: str
    tokens: tuple[str, ...]
    content_words: frozenset[str]

    @classmethod
    def from_text(cls, text: str, id: str | None = None) -> "Fact":
        tokens = tuple(tokenize(text))
        if not tokens:
            raise ValueError(f"sentence normalizes to zero tokens: {text!r}")
        return cls(
            id=id if id is not None else fact_id_for(text),
            text=text,
            tokens=tokens,
            content_words=content_word_set(text),
        )


@dataclass
class CorpusIndex:
    """Immutable after build; safe to share across worker threads."""

    facts: dict[str, Fact]
    postings: dict[str, tuple[tuple[str, int], ...]]  # term -> ((fact_id, tf), ...)
    doc_len: dict[str, int]
    doc_count: int
    avg_doc_len: float
    skipped: int
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    stopwords_version: int = STOPWORDS_VERSION

    def df(self, term: str) -> int:
        entry = self.postings.get(term)
        return len(entry) if entry else 0

    def idf(self, term: str) -> float:
        d = self.df(term)
        if d == 0:
            return 0.0
        # The +1 keeps idf strictly positive even when df > doc_count / 2,
        # which in turn keeps "add a matching term, score goes up" true.
        return math.log(1.0 + (self.doc_count - d + 0.5) / (d + 0.5))

    def scores_for_terms(self, terms: list[str]) -> dict[str, float]:
        """BM25 score of every matching document for a term list.

        Query terms keep their multiplicity: a repeated term contributes
        once per occurrence. Accumulation order is fixed (query order, then
        id-sorted postings) so float results are reproducible bit-for-bit.
        """
        acc: dict[str, float] = {}
        for term in terms:
            entry = self.postings.get(term)
            if not entry:
                continue
            idf = self.idf(term)
            for fact_id, tf in entry:
                dl = self.doc_len[fact_id]
                denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self.avg_doc_len)
                acc[fact_id] = acc.get(fact_id, 0.0) + idf * tf * (self.k1 + 1.0) / denom
        return acc

    def score_document(self, terms: list[str], doc_terms: list[str]) -> float:
        """BM25 score of an arbitrary document against this index's statistics.

        The document need not be indexed; term frequencies and length come
        from ``doc_terms`` (its content terms, multiplicity kept) while
        document frequencies come from the index. For an indexed document
        this matches ``scores_for_terms`` exactly.
        """
        counts: dict[str, int] = {}
        for word in doc_terms:
            counts[word] = counts.get(word, 0) + 1
        dl = len(doc_terms)
        score = 0.0
        for term in terms:
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = self.idf(term)
            denom = tf + self.k1 * (1.0 - self.b + self.b * dl / self.avg_doc_len)
            score += idf * tf * (self.k1 + 1.0) / denom
        return score


def build_index(
    sentences,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> CorpusIndex:
    """Index a corpus of raw sentences.

    Duplicates collapse on normalized text (the lexicographically smallest
    raw variant is kept, so the result does not depend on input order).
    Sentences that normalize to zero tokens are skipped and counted.
    """
    by_norm: dict[str, str] = {}
    skipped = 0
    total = 0
    for raw in sentences:
        total += 1
        norm = normalize_text(raw)
        if not norm:
            skipped += 1
            continue
        kept = by_norm.get(norm)
        if kept is None or raw < kept:
            by_norm[norm] = raw
    if not by_norm:
        raise ValueError("empty corpus")
    if skipped:
        log.warning("skipped %d sentence(s) that normalize to zero tokens", skipped)

    facts: dict[str, Fact] = {}
    for norm, raw in by_norm.items():
        fact = Fact.from_text(raw)
        other = facts.get(fact.id)
        if other is not None and normalize_text(other.text) != norm:
            raise RuntimeError(f"fact id collision: {other.text!r} vs {raw!r}")
        facts[fact.id] = fact

    doc_len: dict[str, int] = {}
    term_docs: dict[str, dict[str, int]] = {}
    for fact_id in sorted(facts):
        terms = content_terms(facts[fact_id].text)
        doc_len[fact_id] = len(terms)
        for term in terms:
            term_docs.setdefault(term, {})
            term_docs[term][fact_id] = term_docs[term].get(fact_id, 0) + 1

    postings = {
        term: tuple(sorted(docs.items()))
        for term, docs in sorted(term_docs.items())
    }
    doc_count = len(facts)
    avg_doc_len = sum(doc_len[fid] for fid in sorted(doc_len)) / doc_count

    return CorpusIndex(
        facts=facts,
        postings=postings,
        doc_len=doc_len,
        doc_count=doc_count,
        avg_doc_len=avg_doc_len,
        skipped=skipped,
        k1=k1,
        b=b,
    )


def search(index: CorpusIndex, query: str, k: int) -> list[tuple[Fact, float]]:
    """Top-k facts by BM25, ties broken by fact id ascending.

    A query with no content terms (or no matching documents) returns [].
    Results for k are always a prefix of results for k+1.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    terms = content_terms(query)
    if not terms:
        return []
    acc = index.scores_for_terms(terms)
    ranked = sorted(acc.items(), key=lambda item: (-item[1], item[0]))
    return [(index.facts[fact_id], score) for fact_id, score in ranked[:k]]


def save_index(index: CorpusIndex, path: str, overwrite: bool = False) -> None:
    """Write the index as a self-describing directory (meta + facts).

    Postings are not serialized: rebuilding them from the stored sentences
    is deterministic, so a load reproduces search behavior bit-for-bit.
    """
    if os.path.isdir(path) and os.listdir(path) and not overwrite:
        raise FileExistsError(f"index directory already exists: {path}")
    os.makedirs(path, exist_ok=True)
    meta = {
        "magic": INDEX_MAGIC,
        "version": INDEX_VERSION,
        "doc_count": index.doc_count,
        "avg_doc_len": index.avg_doc_len,
        "skipped": index.skipped,
        "k1": index.k1,
        "b": index.b,
        "stopwords_version": index.stopwords_version,
    }
    with open(os.path.join(path, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(path, "facts.jsonl"), "w", encoding="utf-8") as fh:
        for fact_id in sorted(index.facts):
            fh.write(json.dumps({"id": fact_id, "text": index.facts[fact_id].text}))
            fh.write("\n")


def load_index(path: str) -> CorpusIndex:
    meta_path = os.path.join(path, "meta.json")
    if not os.path.isfile(meta_path):
        raise ValueError(f"not an index directory (missing meta.json): {path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("magic") != INDEX_MAGIC:
        raise ValueError(f"bad index magic in {meta_path}: {meta.get('magic')!r}")
    if meta.get("version") != INDEX_VERSION:
        raise ValueError(
            f"unsupported index version {meta.get('version')!r} (expected {INDEX_VERSION})"
        )
    if meta.get("stopwords_version") != STOPWORDS_VERSION:
        log.warning(
            "index was built with stopword list version %s, current is %s",
            meta.get("stopwords_version"),
            STOPWORDS_VERSION,
        )
    sentences = []
    with open(os.path.join(path, "facts.jsonl"), encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                sentences.append(json.loads(line)["text"])
    index = build_index(sentences, k1=meta["k1"], b=meta["b"])
    if index.doc_count != meta["doc_count"]:
        raise ValueError(
            f"index corrupt: meta says {meta['doc_count']} docs, "
            f"facts file yields {index.doc_count}"
        )
    return index
