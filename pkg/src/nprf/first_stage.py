"""BM25 ranking over the inverted index and a Rocchio-style expansion baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from nprf.corpus import CorpusError, CorpusIndex, iter_jsonl, preprocess


@dataclass(frozen=True)
class Query:
    query_id: str
    terms: tuple[str, ...]
    kind: str = "title"
    weights: tuple[float, ...] | None = None

    def weighted_terms(self) -> list[tuple[str, float]]:
        if self.weights is None:
            return [(t, 1.0) for t in self.terms]
        return list(zip(self.terms, self.weights))


@dataclass(frozen=True)
class RunEntry:
    doc_id: str
    score: float
    rank: int


@dataclass
class RunList:
    query_id: str
    entries: list[RunEntry] = field(default_factory=list)

    @classmethod
    def from_scores(cls, query_id: str, scored: Iterable[tuple[str, float]]) -> "RunList":
        """Rank ``(doc_id, score)`` pairs given already in final order."""
        return cls(query_id, [RunEntry(d, s, i) for i, (d, s) in enumerate(scored, start=1)])

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]

    def truncate(self, depth: int) -> "RunList":
        return RunList(self.query_id, self.entries[:depth])


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self):
        if self.k1 < 0 or not 0.0 <= self.b <= 1.0:
            raise ValueError(f"invalid BM25 parameters k1={self.k1}, b={self.b}")


def read_queries(path: str | Path, stopwords: Iterable[str], kind: str = "title") -> list[Query]:
    """Queries from JSON lines with ``id`` and ``text``; documents' preprocessing is reused."""
    stop = frozenset(stopwords)
    queries = []
    for lineno, obj in iter_jsonl(path):
        qid, text = obj.get("id"), obj.get("text")
        if not isinstance(qid, str) or not isinstance(text, str):
            raise CorpusError(f"{path}:{lineno}: query needs string fields 'id' and 'text'")
        queries.append(Query(qid, tuple(preprocess(text, stop)), obj.get("kind", kind)))
    return queries


def bm25_idf(index: CorpusIndex, term: str) -> float:
    df = index.df(term)
    n = index.doc_count
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def _saturation(tf: int, dl: int, index: CorpusIndex, params: Bm25Params) -> float:
    norm = params.k1 * (1.0 - params.b + params.b * dl / index.avg_doc_len)
    return tf * (params.k1 + 1.0) / (tf + norm)


def bm25_score(query: Query, doc_id: str, index: CorpusIndex, params: Bm25Params = Bm25Params()) -> float:
    if doc_id not in index:
        raise CorpusError(f"unknown document {doc_id!r}")
    dl = index.doc_lengths[doc_id]
    score = 0.0
    for term, weight in query.weighted_terms():
        tf = index.tf(term, doc_id)
        if tf:
            score += weight * bm25_idf(index, term) * _saturation(tf, dl, index, params)
    return score


def bm25_search(
    query: Query, index: CorpusIndex, params: Bm25Params = Bm25Params(), depth: int = 1000
) -> RunList:
    """Term-at-a-time BM25 over the postings of the query terms.

    Contributions are accumulated in query-term order, matching ``bm25_score``
    bit for bit. Ties are broken by ascending doc_id. Zero-weight terms do not
    make a document a candidate.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    acc: dict[str, float] = {}
    for term, weight in query.weighted_terms():
        postings = index.postings.get(term)
        if not postings or weight == 0.0:
            continue
        idf = bm25_idf(index, term)
        for doc_id, tf in postings:
            contrib = weight * idf * _saturation(tf, index.doc_lengths[doc_id], index, params)
            acc[doc_id] = acc.get(doc_id, 0.0) + contrib
    ranked = sorted(acc.items(), key=lambda kv: (-kv[1], kv[0]))[:depth]
    return RunList.from_scores(query.query_id, ranked)


def rocchio_expand(
    query: Query,
    run: RunList,
    index: CorpusIndex,
    fb_docs: int = 10,
    fb_terms: int = 20,
    beta: float = 0.4,
) -> Query:
    """Append the ``fb_terms`` best pooled tf-idf terms of the top ``fb_docs`` documents.

    Expansion terms carry weight ``beta``; the original terms keep theirs.
    """
    if fb_docs < 1 or fb_terms < 1:
        raise ValueError("fb_docs and fb_terms must be >= 1")
    if len(run) == 0:
        raise ValueError("cannot expand from an empty run")
    if fb_docs > len(run):
        raise ValueError(f"fb_docs={fb_docs} exceeds run length {len(run)}")
    original = set(query.terms)
    pooled: dict[str, float] = {}
    for entry in run.entries[:fb_docs]:
        for term, tf in index.term_freqs[entry.doc_id].items():
            if term not in original:
                pooled[term] = pooled.get(term, 0.0) + tf * index.idf(term)
    chosen = sorted(pooled.items(), key=lambda kv: (-kv[1], kv[0]))[:fb_terms]
    base = query.weighted_terms()
    terms = tuple(t for t, _ in base) + tuple(t for t, _ in chosen)
    weights = tuple(w for _, w in base) + (float(beta),) * len(chosen)
    return Query(query.query_id, terms, query.kind, weights)


def bm25_grid(k1_values: Sequence[float] | None = None, b_values: Sequence[float] | None = None):
    """Default grid: k1 in 0.6..2.0 step 0.2, b in 0.1..1.0 step 0.1."""
    if k1_values is None:
        k1_values = [round(0.6 + 0.2 * i, 1) for i in range(8)]
    if b_values is None:
        b_values = [round(0.1 * i, 1) for i in range(1, 11)]
    return [Bm25Params(k1, b) for k1 in k1_values for b in b_values]


def write_run(path: str | Path, runs: Iterable[RunList], tag: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for run in runs:
            for e in run.entries:
                fh.write(f"{run.query_id} Q0 {e.doc_id} {e.rank} {e.score:.6f} {tag}\n")


def read_run(path: str | Path) -> dict[str, RunList]:
    """Parse a TREC run file; entries are re-sorted by rank per query."""
    runs: dict[str, list[RunEntry]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise CorpusError(f"{path}:{lineno}: expected 6 fields in run line")
            qid, _, doc_id, rank, score, _ = parts
            runs.setdefault(qid, []).append(RunEntry(doc_id, float(score), int(rank)))
    return {q: RunList(q, sorted(es, key=lambda e: e.rank)) for q, es in runs.items()}
