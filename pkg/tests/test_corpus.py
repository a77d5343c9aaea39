import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nprf.corpus import (
    CorpusError,
    CorpusIndex,
    Document,
    build_index,
    load_stopwords,
    preprocess,
    read_corpus,
    tfidf_summary,
)


class TestPreprocess:
    def test_empty(self):
        assert preprocess("") == []

    def test_all_stopwords(self):
        assert preprocess("The THE the", {"the"}) == []

    def test_split_on_non_alphanumeric(self):
        assert preprocess("foo-bar_baz,QUX 42") == ["foo", "bar", "baz", "qux", "42"]

    def test_default_stopwords_removed(self):
        stop = load_stopwords()
        assert "the" in stop and "aren" in stop
        assert preprocess("The cats are running", stop) == ["cat", "run"]

    def test_custom_stopword_file(self, tmp_path):
        path = tmp_path / "stop.txt"
        path.write_text("Foo\nbar\n\n")
        assert load_stopwords(path) == {"foo", "bar"}


class TestBuildIndex:
    def test_single_document(self):
        idx = build_index([Document("x", ("a", "b", "a"))])
        assert idx.df("a") == 1
        assert idx.tf("a", "x") == 2
        assert idx.doc_count == 1
        assert idx.avg_doc_len == 3

    def test_two_documents(self):
        idx = build_index([Document("1", ("a",)), Document("2", ("a", "b"))])
        assert (idx.df("a"), idx.df("b")) == (2, 1)
        assert idx.avg_doc_len == 1.5

    def test_duplicate_id_names_offender(self):
        with pytest.raises(CorpusError, match="'dup'"):
            build_index([Document("dup", ("a",)), Document("dup", ("b",))])

    def test_statistics_match_recount(self, random_corpus):
        docs, words, idx = random_corpus
        counts = {d.doc_id: Counter(d.terms) for d in docs}
        assert idx.doc_count == len(docs)
        assert abs(idx.avg_doc_len - sum(len(d.terms) for d in docs) / len(docs)) < 1e-9
        for w in words:
            holders = sorted(d for d, c in counts.items() if c[w])
            assert idx.df(w) == len(holders)
            assert [p[0] for p in idx.postings.get(w, [])] == holders
            for d in holders:
                assert idx.tf(w, d) == counts[d][w]

    def test_invariants(self, random_corpus):
        _, _, idx = random_corpus
        for term, plist in idx.postings.items():
            assert all(tf >= 1 for _, tf in plist)
            assert 0 < idx.df(term) <= idx.doc_count
            assert idx.idf(term) >= 0
        assert abs(sum(idx.doc_lengths.values()) / idx.doc_count - idx.avg_doc_len) < 1e-9

    def test_order_independent(self, random_corpus):
        docs, _, idx = random_corpus
        again = build_index(reversed(docs))
        assert again.postings == idx.postings
        assert again.avg_doc_len == idx.avg_doc_len

    def test_round_trip(self, random_corpus, tmp_path):
        _, _, idx = random_corpus
        idx.save(tmp_path / "a.idx")
        loaded = CorpusIndex.load(tmp_path / "a.idx")
        assert loaded.postings == idx.postings
        assert loaded.doc_lengths == idx.doc_lengths
        assert loaded.avg_doc_len == idx.avg_doc_len
        loaded.save(tmp_path / "b.idx")
        assert (tmp_path / "a.idx").read_bytes() == (tmp_path / "b.idx").read_bytes()
        assert (tmp_path / "a.idx").read_text().startswith("NPRFIDX1")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_text("NOTANIDX 0\n")
        with pytest.raises(CorpusError, match="magic"):
            CorpusIndex.load(tmp_path / "x")


class TestTfidfSummary:
    def test_fewer_terms_than_k(self):
        idx = build_index([Document("1", ("a", "a")), Document("2", ("b",))])
        assert len(tfidf_summary("1", idx, 20)) == 1

    def test_hand_computed(self):
        idx = build_index([Document("doc1", ("a", "a", "b")), Document("doc2", ("b",))])
        (top,) = tfidf_summary("doc1", idx, 1)
        assert top.term == "a"
        assert top.weight == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_saturation(self, random_corpus):
        docs, _, idx = random_corpus
        for d in docs[:10]:
            distinct = set(d.terms)
            assert {tw.term for tw in tfidf_summary(d, idx, len(distinct))} == distinct

    def test_k_must_be_positive(self, toy_index):
        with pytest.raises(ValueError):
            tfidf_summary("d1", toy_index, 0)

    def test_total_order_with_lexicographic_ties(self):
        idx = build_index([Document("1", ("z", "y", "x")), Document("2", ("q",))])
        assert [tw.term for tw in tfidf_summary("1", idx, 3)] == ["x", "y", "z"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=12), min_size=1, max_size=15), st.integers(1, 8))
def test_summary_sorted_and_nonnegative(doc_terms, k):
    docs = [Document(f"d{i}", tuple(t)) for i, t in enumerate(doc_terms)]
    if sum(len(t) for t in doc_terms) == 0:
        return
    idx = build_index(docs)
    for d in docs:
        summary = tfidf_summary(d, idx, k)
        assert len(summary) == min(k, len(set(d.terms)))
        keys = [(-tw.weight, tw.term) for tw in summary]
        assert keys == sorted(keys)
        assert all(tw.weight >= 0 for tw in summary)


def test_read_corpus_reports_line(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"id": "a", "text": "hello"}\n{broken\n')
    with pytest.raises(CorpusError, match=":2:"):
        list(read_corpus(path, set()))
