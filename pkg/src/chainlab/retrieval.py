"""Two-hop candidate chain retrieval.

For a question/answer pair the retriever finds ordered fact pairs (f1, f2)
where f1 is retrieved for the combined question+answer query and f2 both
connects to f1 and brings in query material that f1 lacks. The four steps:

1. F1 = top-k BM25 hits for the query "question answer".
2. For each f1, candidate f2 must contain at least one content word from
   (query \\ f1) and at least one from (f1 \\ query); candidates are ranked
   by BM25 against "question answer f1" and the top l kept.
3. Pairs that fail the question/answer overlap filter are dropped.
4. Pairs are ranked by score_f1 + score_f2 and the top m returned.

Everything is deterministic: score ties break by fact id (f1.id, then f2.id).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .hypothesis import make_hypothesis
from .index import CorpusIndex, Fact, search
from .textnorm import content_terms, content_word_set


@dataclass(frozen=True)
class QAItem:
    question_id: str
    question: str
    answer: str
    options: tuple[str, ...] | None = None
    hypothesis: str | None = None

    def __post_init__(self):
        if not self.question or not self.question.strip():
            raise ValueError(f"question {self.question_id!r}: empty question text")
        if not self.answer or not self.answer.strip():
            raise ValueError(f"question {self.question_id!r}: empty answer text")


@dataclass(frozen=True)
class RetrievalParams:
    """Knobs for the two-hop retriever.

    ``require_question_and_answer_overlap`` selects the overlap filter
    reading: True (default) keeps only pairs that touch both the question
    and the answer; False is the weaker literal reading (either suffices).
    ``second_hop_query`` picks the ranking query for step 2: "qa+f1"
    (default) or plain "qa".
    """

    k: int = 20
    l: int = 4
    m: int = 10
    require_question_and_answer_overlap: bool = True
    second_hop_query: str = "qa+f1"

    def __post_init__(self):
        for name in ("k", "l", "m"):
            value = getattr(self, name)
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.second_hop_query not in ("qa+f1", "qa"):
            raise ValueError(f"unknown second_hop_query: {self.second_hop_query!r}")


@dataclass(frozen=True)
class ChainCandidate:
    """An ordered two-fact chain with its retrieval scores."""

    f1: Fact
    f2: Fact
    hypothesis: str
    score_f1: float
    score_f2: float

    def __post_init__(self):
        if self.f1.id == self.f2.id:
            raise ValueError(f"chain pairs a fact with itself: {self.f1.id}")

    @property
    def combined_score(self) -> float:
        return self.score_f1 + self.score_f2


def overlap_filter(pair: tuple[Fact, Fact], qa: QAItem, require_both: bool = True) -> bool:
    """Does the pair share content words with the question and/or answer?

    With ``require_both`` (the default) a pair must overlap the question
    AND the answer; otherwise overlapping either one is enough.
    """
    union = pair[0].content_words | pair[1].content_words
    q_hit = bool(union & content_word_set(qa.question))
    a_hit = bool(union & content_word_set(qa.answer))
    return (q_hit and a_hit) if require_both else (q_hit or a_hit)


def _candidate_ids(index: CorpusIndex, terms: frozenset[str]) -> set[str]:
    ids: set[str] = set()
    for term in terms:
        entry = index.postings.get(term)
        if entry:
            ids.update(fact_id for fact_id, _ in entry)
    return ids


def retrieve_chains(
    index: CorpusIndex,
    qa: QAItem,
    params: RetrievalParams = RetrievalParams(),
) -> list[ChainCandidate]:
    """Top-m two-fact chains for a QA item (may return fewer)."""
    qa_query = f"{qa.question} {qa.answer}"
    hypothesis = make_hypothesis(qa).text
    qa_words = content_word_set(qa_query)

    pairs: list[tuple[Fact, float, Fact, float]] = []
    for f1, score_f1 in search(index, qa_query, params.k):
        need_from_qa = qa_words - f1.content_words
        need_from_f1 = f1.content_words - qa_words
        if not need_from_qa or not need_from_f1:
            continue
        candidates = _candidate_ids(index, need_from_qa) & _candidate_ids(index, need_from_f1)
        candidates.discard(f1.id)
        if not candidates:
            continue
        if params.second_hop_query == "qa+f1":
            hop_query = f"{qa_query} {f1.text}"
        else:
            hop_query = qa_query
        hop_scores = index.scores_for_terms(content_terms(hop_query))
        ranked = sorted(
            ((fact_id, hop_scores.get(fact_id, 0.0)) for fact_id in candidates),
            key=lambda item: (-item[1], item[0]),
        )
        for fact_id, score_f2 in ranked[: params.l]:
            pairs.append((f1, score_f1, index.facts[fact_id], score_f2))

    kept = [
        (f1, s1, f2, s2)
        for f1, s1, f2, s2 in pairs
        if overlap_filter((f1, f2), qa, require_both=params.require_question_and_answer_overlap)
    ]
    kept.sort(key=lambda p: (-(p[1] + p[3]), p[0].id, p[2].id))
    return [
        ChainCandidate(f1=f1, f2=f2, hypothesis=hypothesis, score_f1=s1, score_f2=s2)
        for f1, s1, f2, s2 in kept[: params.m]
    ]


def rescore_chain(
    index: CorpusIndex,
    qa: QAItem,
    chain: ChainCandidate,
    params: RetrievalParams = RetrievalParams(),
) -> ChainCandidate:
    """Recompute a chain's hop scores against an index.

    Uses the same queries as :func:`retrieve_chains` — "question answer"
    for the first hop and (by default) that plus f1's text for the second —
    so a chain that came out of retrieval rescored against the same index
    keeps its scores. The facts need not be indexed.
    """
    qa_query = f"{qa.question} {qa.answer}"
    score_f1 = index.score_document(content_terms(qa_query), content_terms(chain.f1.text))
    if params.second_hop_query == "qa+f1":
        hop_query = f"{qa_query} {chain.f1.text}"
    else:
        hop_query = qa_query
    score_f2 = index.score_document(content_terms(hop_query), content_terms(chain.f2.text))
    return ChainCandidate(
        f1=chain.f1,
        f2=chain.f2,
        hypothesis=chain.hypothesis,
        score_f1=score_f1,
        score_f2=score_f2,
    )
