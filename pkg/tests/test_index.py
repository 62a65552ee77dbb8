import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainlab.index import Fact, build_index, fact_id_for, load_index, save_index, search
from chainlab.textnorm import content_terms

THREE_FACTS = [
    "Sparks can start a forest fire",
    "Forest fires can destroy habitats",
    "Rivers erode rocks",
]


def hand_bm25(corpus: list[str], query: str) -> dict[str, float]:
    """Independent BM25 route: literal formula over hand-assembled counts."""
    docs = {fact_id_for(text): content_terms(text) for text in corpus}
    n = len(docs)
    avgdl = sum(len(t) for t in docs.values()) / n
    df: dict[str, int] = {}
    for terms in docs.values():
        for term in set(terms):
            df[term] = df.get(term, 0) + 1
    out = {}
    for doc_id, terms in docs.items():
        score = 0.0
        for q in content_terms(query):
            tf = terms.count(q)
            if tf == 0 or q not in df:
                continue
            idf = math.log(1.0 + (n - df[q] + 0.5) / (df[q] + 0.5))
            score += idf * (tf * (1.2 + 1.0)) / (tf + 1.2 * (1.0 - 0.75 + 0.75 * len(terms) / avgdl))
        if score:
            out[doc_id] = score
    return out


class TestBuild:
    def test_single_fact_counts(self):
        idx = build_index(["Sparks can start a forest fire."])
        assert idx.doc_count == 1
        assert idx.df("spark") == 1
        assert idx.df("start") == 1
        assert idx.df("absent") == 0

    def test_dedup_by_normalized_text(self):
        idx = build_index(["A forest fire.", "a  forest FIRE", "Rivers erode rocks"])
        assert idx.doc_count == 2

    def test_zero_token_sentences_skipped_and_counted(self):
        idx = build_index(["Rivers erode rocks", "???", "  "])
        assert idx.doc_count == 1
        assert idx.skipped == 2

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError, match="empty corpus"):
            build_index([])
        with pytest.raises(ValueError, match="empty corpus"):
            build_index(["!!!", "..."])

    def test_every_fact_has_tokens(self):
        idx = build_index(THREE_FACTS)
        assert all(fact.tokens for fact in idx.facts.values())

    def test_ids_are_content_derived(self):
        assert fact_id_for("A forest fire.") == fact_id_for("a  forest FIRE")
        assert fact_id_for("x") != fact_id_for("y")


class TestScores:
    def test_three_fact_scores_match_hand_route(self):
        idx = build_index(THREE_FACTS)
        expected = hand_bm25(THREE_FACTS, "forest fire")
        got = dict(
            (fact.id, score) for fact, score in search(idx, "forest fire", 10)
        )
        assert set(got) == set(expected)
        for fact_id, score in expected.items():
            assert got[fact_id] == pytest.approx(score, abs=1e-12)

    def test_matching_docs_only(self):
        idx = build_index(THREE_FACTS)
        hits = search(idx, "rivers", 10)
        assert [f.text for f, _ in hits] == ["Rivers erode rocks"]

    def test_empty_query_returns_empty(self):
        idx = build_index(THREE_FACTS)
        assert search(idx, "the of and", 5) == []
        assert search(idx, "", 5) == []

    def test_adding_contained_term_strictly_increases_score(self):
        idx = build_index(THREE_FACTS)
        target = fact_id_for("Sparks can start a forest fire")
        base = dict((f.id, s) for f, s in search(idx, "forest", 10))[target]
        more = dict((f.id, s) for f, s in search(idx, "forest spark", 10))[target]
        assert more > base

    def test_tie_break_by_fact_id(self):
        # Symmetric docs score identically; order must follow ids.
        idx = build_index(["red apple", "red berry"])
        hits = search(idx, "red", 5)
        assert hits[0][1] == hits[1][1]
        assert [f.id for f, _ in hits] == sorted(f.id for f, _ in hits)

    def test_k_prefix_property(self):
        idx = build_index(THREE_FACTS)
        top1 = search(idx, "forest fire rivers", 1)
        top3 = search(idx, "forest fire rivers", 3)
        assert top3[:1] == top1


class TestDeterminism:
    @settings(max_examples=40, deadline=None)
    @given(st.permutations(THREE_FACTS + ["Lightning strikes trees", "Fire needs oxygen"]))
    def test_build_is_order_independent(self, shuffled):
        reference = build_index(sorted(shuffled))
        idx = build_index(shuffled)
        assert idx.doc_count == reference.doc_count
        assert idx.avg_doc_len == reference.avg_doc_len
        assert idx.postings == reference.postings
        query = "what starts a forest fire"
        assert [
            (f.id, s) for f, s in search(idx, query, 5)
        ] == [(f.id, s) for f, s in search(reference, query, 5)]

    def test_duplicate_raw_variants_resolve_order_free(self):
        a = build_index(["A forest fire.", "a forest fire", "Rivers erode rocks"])
        b = build_index(["a forest fire", "A forest fire.", "Rivers erode rocks"])
        assert {f.text for f in a.facts.values()} == {f.text for f in b.facts.values()}


class TestPersistence:
    def test_round_trip_behavior_is_identical(self, tmp_path):
        idx = build_index(THREE_FACTS + ["Lightning strikes trees"])
        save_index(idx, str(tmp_path / "idx"))
        loaded = load_index(str(tmp_path / "idx"))
        assert loaded.doc_count == idx.doc_count
        assert loaded.avg_doc_len == idx.avg_doc_len
        assert loaded.postings == idx.postings
        for query in ("forest fire", "lightning", "rivers erode"):
            assert [(f.id, s) for f, s in search(loaded, query, 10)] == [
                (f.id, s) for f, s in search(idx, query, 10)
            ]

    def test_refuses_to_clobber_without_overwrite(self, tmp_path):
        idx = build_index(THREE_FACTS)
        save_index(idx, str(tmp_path / "idx"))
        with pytest.raises(FileExistsError):
            save_index(idx, str(tmp_path / "idx"))
        save_index(idx, str(tmp_path / "idx"), overwrite=True)

    def test_rejects_foreign_directory(self, tmp_path):
        (tmp_path / "meta.json").write_text('{"magic": "something-else", "version": 1}')
        with pytest.raises(ValueError, match="magic"):
            load_index(str(tmp_path))

    def test_rejects_missing_meta(self, tmp_path):
        with pytest.raises(ValueError, match="meta.json"):
            load_index(str(tmp_path))


class TestFact:
    def test_from_text(self):
        fact = Fact.from_text("Rivers erode the rocks they flow over")
        assert fact.tokens[0] == "rivers"
        assert fact.content_words == {"river", "erod", "rock", "flow"}

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="zero tokens"):
            Fact.from_text("—!—")
