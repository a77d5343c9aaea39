import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nprf.corpus import CorpusError, Document, build_index
from nprf.first_stage import (
    Bm25Params,
    Query,
    RunList,
    bm25_grid,
    bm25_score,
    bm25_search,
    read_run,
    rocchio_expand,
    write_run,
)

from conftest import random_docs


def test_hand_computed_toy_score(toy_index):
    # N=3, avgdl=4, df(a)=2; d1 has tf=2, dl=4 and d3 has tf=1, dl=5
    idf = math.log(1 + 1.5 / 2.5)
    q = Query("q", ("a",))
    assert bm25_score(q, "d1", toy_index) == pytest.approx(idf * 2 * 2.2 / (2 + 1.2), abs=1e-9)
    assert bm25_score(q, "d3", toy_index) == pytest.approx(idf * 2.2 / (1 + 1.2 * 1.1875), abs=1e-9)
    assert bm25_score(q, "d2", toy_index) == 0.0


def test_empty_query_scores_zero(toy_index):
    assert bm25_score(Query("q", ()), "d1", toy_index) == 0.0


def test_unknown_doc(toy_index):
    with pytest.raises(CorpusError):
        bm25_score(Query("q", ("a",)), "nope", toy_index)


def test_duplicate_query_terms_count_twice(toy_index):
    once = bm25_score(Query("q", ("a",)), "d1", toy_index)
    assert bm25_score(Query("q", ("a", "a")), "d1", toy_index) == pytest.approx(2 * once)


def test_single_doc_corpus():
    idx = build_index([Document("only", ("x", "y"))])
    run = bm25_search(Query("q", ("x",)), idx)
    assert [(e.doc_id, e.rank) for e in run] == [("only", 1)]


def test_depth_beyond_matches(toy_index):
    assert len(bm25_search(Query("q", ("a",)), toy_index, depth=50)) == 2


def test_search_matches_exhaustive_scoring(random_corpus):
    docs, words, idx = random_corpus
    rng = np.random.default_rng(8)
    for _ in range(20):
        q = Query("q", tuple(words[i] for i in rng.integers(len(words), size=3)))
        run = bm25_search(q, idx, depth=len(docs))
        scored = [(d.doc_id, bm25_score(q, d.doc_id, idx)) for d in docs]
        expected = sorted([s for s in scored if s[1] > 0], key=lambda s: (-s[1], s[0]))
        assert [(e.doc_id, e.score) for e in run] == expected


def test_run_invariants(random_corpus):
    _, words, idx = random_corpus
    run = bm25_search(Query("q", tuple(words[:4])), idx, depth=30)
    assert [e.rank for e in run] == list(range(1, len(run) + 1))
    scores = [e.score for e in run]
    assert scores == sorted(scores, reverse=True)
    assert len(set(run.doc_ids)) == len(run)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.floats(0, 3), st.floats(0, 1))
def test_monotone_in_tf(extra, k1, b):
    base = ("a", "b", "c")
    idx1 = build_index([Document("x", base), Document("y", ("a", "z"))])
    idx2 = build_index([Document("x", base + ("a",) * extra), Document("y", ("a", "z"))])
    q = Query("q", ("a",))
    p = Bm25Params(k1, b)
    # lengthening the doc also moves avgdl, so compare at b=0 for strict tf monotonicity
    p0 = Bm25Params(k1, 0.0)
    assert bm25_score(q, "x", idx2, p0) >= bm25_score(q, "x", idx1, p0)
    assert bm25_score(q, "x", idx2, p) >= 0


def test_params_validated():
    with pytest.raises(ValueError):
        Bm25Params(-1, 0.5)
    with pytest.raises(ValueError):
        Bm25Params(1.2, 1.5)


def test_grid_ranges():
    grid = bm25_grid()
    assert len(grid) == 80
    assert {p.k1 for p in grid} == {0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0}
    assert min(p.b for p in grid) == 0.1 and max(p.b for p in grid) == 1.0


class TestRocchio:
    def test_beta_zero_preserves_order(self, random_corpus):
        docs, words, idx = random_corpus
        q = Query("q", tuple(words[:2]))
        run = bm25_search(q, idx, depth=len(docs))
        expanded = rocchio_expand(q, run, idx, fb_docs=5, fb_terms=10, beta=0.0)
        assert bm25_search(expanded, idx, depth=len(docs)).doc_ids == run.doc_ids

    def test_single_term_is_pooled_tfidf_argmax(self, random_corpus):
        _, words, idx = random_corpus
        q = Query("q", (words[0],))
        run = bm25_search(q, idx, depth=100)
        pooled = {}
        for e in run.entries[:5]:
            for t in idx.documents[e.doc_id].terms:
                if t != words[0]:
                    pooled[t] = pooled.get(t, 0.0) + idx.idf(t)
        best = min(pooled, key=lambda t: (-pooled[t], t))
        expanded = rocchio_expand(q, run, idx, fb_docs=5, fb_terms=1)
        assert expanded.terms == (words[0], best)
        assert expanded.weights == (1.0, 0.4)

    def test_expansion_excludes_query_terms(self, random_corpus):
        _, words, idx = random_corpus
        q = Query("q", tuple(words[:3]))
        run = bm25_search(q, idx, depth=50)
        expanded = rocchio_expand(q, run, idx, fb_docs=10, fb_terms=20)
        assert not set(expanded.terms[3:]) & set(q.terms)

    def test_parameter_errors(self, toy_index):
        run = bm25_search(Query("q", ("a",)), toy_index)
        with pytest.raises(ValueError):
            rocchio_expand(Query("q", ("a",)), run, toy_index, fb_docs=0)
        with pytest.raises(ValueError):
            rocchio_expand(Query("q", ("a",)), run, toy_index, fb_terms=0)


def test_run_file_round_trip(tmp_path, random_corpus):
    _, words, idx = random_corpus
    runs = [bm25_search(Query(f"q{i}", (words[i],)), idx, depth=10) for i in range(3)]
    write_run(tmp_path / "r.run", runs, "bm25")
    line = (tmp_path / "r.run").read_text().splitlines()[0].split(" ")
    assert line[1] == "Q0" and line[5] == "bm25" and len(line[4].split(".")[1]) == 6
    back = read_run(tmp_path / "r.run")
    for r in runs:
        assert back[r.query_id].doc_ids == r.doc_ids
