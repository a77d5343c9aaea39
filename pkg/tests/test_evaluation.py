import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from nprf.evaluation import (
    Qrels,
    average_precision,
    evaluate,
    ndcg_at,
    paired_t_test,
    precision_at,
    regularized_incomplete_beta,
    t_two_sided_p,
)
from nprf.first_stage import RunList


def brute_ap(ranking, relevant, depth=1000):
    hits, total = 0, 0.0
    for i, d in enumerate(ranking[:depth], start=1):
        if d in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def brute_ndcg(ranking, grades, cutoff=20):
    dcg = sum((2 ** grades.get(d, 0) - 1) / math.log2(i + 1) for i, d in enumerate(ranking[:cutoff], start=1))
    ideal = sorted(grades.values(), reverse=True)[:cutoff]
    idcg = sum((2 ** g - 1) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg


class TestMetrics:
    def test_perfect_ap(self):
        assert average_precision(["a", "b", "c"], {"a", "b"}) == 1.0

    def test_ap_single_relevant_at_two(self):
        assert average_precision(["x", "a", "y"], {"a"}) == 0.5

    def test_ap_counts_unretrieved(self):
        assert average_precision(["a"], {"a", "b"}) == 0.5

    def test_ap_no_relevant(self):
        assert average_precision(["a"], set()) is None

    def test_precision_at_20(self):
        ranking = [f"d{i}" for i in range(30)]
        assert precision_at(ranking, {f"d{i}" for i in range(0, 14, 2)}) == pytest.approx(0.35)

    def test_precision_short_run(self):
        assert precision_at(["a"], {"a"}) == pytest.approx(1 / 20)

    def test_ndcg_hand_case(self):
        grades = {"a": 2, "b": 0, "c": 1, "d": 3, "e": 0}
        ranking = ["a", "b", "c", "d", "e"]
        dcg = 3 / 1 + 0 + 1 / 2 + 7 / math.log2(5)
        idcg = 7 + 3 / math.log2(3) + 1 / 2
        assert ndcg_at(ranking, grades) == pytest.approx(dcg / idcg, abs=1e-12)

    def test_ndcg_ideal_is_one(self):
        assert ndcg_at(["d", "a", "c"], {"a": 2, "c": 1, "d": 3}) == pytest.approx(1.0)

    def test_ndcg_all_zero(self):
        assert ndcg_at(["a"], {"a": 0}) is None

    @settings(max_examples=200, deadline=None)
    @given(st.data())
    def test_against_brute_force(self, data):
        n = data.draw(st.integers(1, 40))
        docs = [f"d{i}" for i in range(n)]
        ranking = data.draw(st.permutations(docs))[: data.draw(st.integers(1, n))]
        grades = {d: data.draw(st.integers(0, 3)) for d in docs}
        relevant = {d for d, g in grades.items() if g > 0}
        if relevant:
            assert abs(average_precision(ranking, relevant) - brute_ap(ranking, relevant)) <= 1e-10
            assert abs(ndcg_at(ranking, grades) - brute_ndcg(ranking, grades)) <= 1e-10
        assert precision_at(ranking, relevant) == sum(d in relevant for d in ranking[:20]) / 20


def test_evaluate_excludes_queries_without_relevant():
    qrels = Qrels({"q1": {"a": 1}, "q2": {"b": 0}})
    runs = {"q1": RunList.from_scores("q1", [("a", 1.0)]), "q2": RunList.from_scores("q2", [("b", 1.0)])}
    report = evaluate(runs, qrels)
    assert report.excluded == ["q2"]
    assert report.mean("map") == 1.0


def test_qrels_round_trip(tmp_path):
    qrels = Qrels({"q1": {"a": 1, "b": 0}, "q2": {"c": 2}})
    qrels.write(tmp_path / "qrels")
    back = Qrels.read(tmp_path / "qrels")
    assert back.judgments == qrels.judgments
    assert back.relevant("q1") == {"a"} and back.non_relevant("q1") == {"b"}


class TestTTest:
    def test_identical(self):
        r = paired_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        assert (r.t, r.p, r.significant_at_95) == (0.0, 1.0, False)

    def test_constant_difference(self):
        r = paired_t_test([2, 3, 4, 5], [1, 2, 3, 4])
        assert r.t == math.inf and r.p == 0.0 and r.significant_at_95

    def test_hand_case(self):
        b = [0.0] * 5
        r = paired_t_test([1.2, 0.8, 1.1, 0.9, 1.0], b)
        assert r.t == pytest.approx(14.142, abs=1e-3)
        assert r.p < 0.001 and r.significant_at_95

    @pytest.mark.parametrize("t,df,p", [(2.776445, 4, 0.05), (4.604095, 4, 0.01), (2.228139, 10, 0.05)])
    def test_table_values(self, t, df, p):
        assert t_two_sided_p(t, df) == pytest.approx(p, abs=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            paired_t_test([1, 2], [1])

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=60))
    def test_matches_scipy_and_is_symmetric(self, pairs):
        a, b = [x for x, _ in pairs], [y for _, y in pairs]
        r = paired_t_test(a, b)
        s = paired_t_test(b, a)
        assert s.p == r.p and s.t == -r.t
        if math.isfinite(r.t) and r.t != 0.0 and np.std(np.subtract(a, b)) > 1e-9:
            ref = stats.ttest_rel(a, b)
            assert r.t == pytest.approx(ref.statistic, rel=1e-7)
            assert r.p == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0, 1))
    def test_incomplete_beta_matches_scipy(self, a, b, x):
        from scipy.special import betainc
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(betainc(a, b, x), rel=1e-9, abs=1e-12)
