"""Qrels, ranking metrics (MAP@1000, P@20, NDCG@20) and the paired t-test."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from nprf.first_stage import RunList

log = logging.getLogger(__name__)

METRICS = ("map", "P_20", "ndcg_20")


class Qrels:
    """Graded judgments; unjudged pairs count as grade 0."""

    def __init__(self, judgments: Mapping[str, Mapping[str, int]] | None = None):
        self.judgments: dict[str, dict[str, int]] = {}
        for qid, docs in (judgments or {}).items():
            for doc_id, grade in docs.items():
                self.add(qid, doc_id, grade)

    def add(self, query_id: str, doc_id: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade for ({query_id}, {doc_id})")
        self.judgments.setdefault(query_id, {})[doc_id] = int(grade)

    def grades(self, query_id: str) -> dict[str, int]:
        return self.judgments.get(query_id, {})

    def relevant(self, query_id: str) -> set[str]:
        return {d for d, g in self.grades(query_id).items() if g > 0}

    def non_relevant(self, query_id: str) -> set[str]:
        return {d for d, g in self.grades(query_id).items() if g == 0}

    @property
    def query_ids(self) -> list[str]:
        return sorted(self.judgments)

    @classmethod
    def read(cls, path: str | Path) -> "Qrels":
        """Parse TREC qrels lines ``query_id 0 doc_id grade``."""
        qrels = cls()
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: expected 'query_id 0 doc_id grade'")
                qrels.add(parts[0], parts[2], int(parts[3]))
        return qrels

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for qid in self.query_ids:
                for doc_id in sorted(self.judgments[qid]):
                    fh.write(f"{qid} 0 {doc_id} {self.judgments[qid][doc_id]}\n")


def _doc_ids(run) -> list[str]:
    return run.doc_ids if isinstance(run, RunList) else list(run)


def average_precision(run, relevant: set[str], depth: int = 1000) -> float | None:
    """Non-interpolated AP over the top ``depth``; ``None`` when nothing is relevant."""
    if not relevant:
        return None
    hits, total = 0, 0.0
    for i, doc_id in enumerate(_doc_ids(run)[:depth], start=1):
        if doc_id in relevant:
            hits += 1
            total += hits / i
    return total / len(relevant)


def precision_at(run, relevant: set[str], cutoff: int = 20) -> float:
    top = _doc_ids(run)[:cutoff]
    return sum(1 for d in top if d in relevant) / cutoff


def ndcg_at(run, grades: Mapping[str, int], cutoff: int = 20) -> float | None:
    """NDCG with ``2^g - 1`` gains; ``None`` when the ideal DCG is zero."""
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:cutoff]
    idcg = sum((2.0**g - 1.0) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    if idcg == 0.0:
        return None
    dcg = 0.0
    for i, doc_id in enumerate(_doc_ids(run)[:cutoff], start=1):
        g = grades.get(doc_id, 0)
        if g > 0:
            dcg += (2.0**g - 1.0) / math.log2(i + 1)
    return dcg / idcg


@dataclass
class MetricReport:
    per_query: dict[str, dict[str, float]] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)

    @property
    def query_count(self) -> int:
        return len(self.per_query)

    def mean(self, metric: str) -> float:
        vals = [row[metric] for row in self.per_query.values()]
        return sum(vals) / len(vals) if vals else 0.0

    @property
    def means(self) -> dict[str, float]:
        return {m: self.mean(m) for m in METRICS}

    def values(self, metric: str, query_ids: Sequence[str] | None = None) -> list[float]:
        qids = query_ids if query_ids is not None else sorted(self.per_query)
        return [self.per_query[q][metric] for q in qids]

    def table(self, name: str = "run") -> str:
        lines = [f"{'query':<12}" + "".join(f"{m:>10}" for m in METRICS)]
        for qid in sorted(self.per_query):
            lines.append(f"{qid:<12}" + "".join(f"{self.per_query[qid][m]:>10.4f}" for m in METRICS))
        lines.append(f"{'all':<12}" + "".join(f"{self.mean(m):>10.4f}" for m in METRICS))
        lines.append(f"# {name}: {self.query_count} queries evaluated, {len(self.excluded)} excluded")
        return "\n".join(lines) + "\n"

    def jsonl(self, name: str = "run") -> str:
        rows = [json.dumps({"run": name, "query_id": q, **self.per_query[q]}, sort_keys=True)
                for q in sorted(self.per_query)]
        rows.append(json.dumps({"run": name, "query_id": "all", "queries": self.query_count,
                                **self.means}, sort_keys=True))
        return "\n".join(rows) + "\n"


def evaluate(runs: Mapping[str, RunList] | Iterable[RunList], qrels: Qrels) -> MetricReport:
    """Per-query metrics; queries without any relevant document are excluded and logged."""
    if not isinstance(runs, Mapping):
        runs = {r.query_id: r for r in runs}
    report = MetricReport()
    for qid in sorted(runs):
        grades = qrels.grades(qid)
        relevant = {d for d, g in grades.items() if g > 0}
        if not relevant:
            report.excluded.append(qid)
            continue
        run = runs[qid]
        report.per_query[qid] = {
            "map": average_precision(run, relevant),
            "P_20": precision_at(run, relevant),
            "ndcg_20": ndcg_at(run, grades),
        }
    if report.excluded:
        log.info("excluded %d queries without relevant documents", len(report.excluded))
    return report


# ---------------------------------------------------------------------------
# Student t distribution via the regularized incomplete beta function
# ---------------------------------------------------------------------------


def _beta_continued_fraction(a: float, b: float, x: float, max_iter: int = 500, tol: float = 1e-15) -> float:
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    significant_at_95: bool


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test on per-query values aligned by position.

    Zero variance: a nonzero mean difference counts as significant (t=+-inf,
    p=0); a zero mean gives t=0, p=1.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least two paired observations")
    diffs = [x - y for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False)
        return TTestResult(math.copysign(math.inf, mean), 0.0, True)
    t = mean / math.sqrt(var / n)
    p = t_two_sided_p(t, n - 1)
    return TTestResult(t, p, p < 0.05)
