"""Synthetic topical collection with built-in vocabulary mismatch.

Every topic owns a vocabulary split into two halves ("dialects"). A document
writes mostly in one dialect of its topic; queries are drawn from the first
dialect only, so roughly half of the relevant documents share few surface
terms with the query. Word vectors are clustered by topic, which lets an
embedding-based matcher bridge the two dialects where exact matching cannot.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from nprf.corpus import Document, build_index
from nprf.embeddings import EmbeddingTable, save_embeddings
from nprf.evaluation import Qrels
from nprf.first_stage import Query


@dataclass(frozen=True)
class SyntheticSpec:
    n_docs: int = 2000
    n_topics: int = 20
    words_per_topic: int = 200
    background_words: int = 1000
    n_queries: int = 50
    query_len: tuple[int, int] = (2, 4)
    doc_len: tuple[int, int] = (60, 160)
    topic_share: float = 0.35
    other_dialect: float = 0.05
    noise_share: float = 0.10
    confuser_share: float = 0.10
    dim: int = 50
    topic_spread: float = 0.8
    zipf: float = 1.0
    seed: int = 7


@dataclass
class SyntheticCollection:
    spec: SyntheticSpec
    documents: list[Document]
    queries: list[Query]
    qrels: Qrels
    tokens: list[str]
    vectors: np.ndarray
    doc_topic: dict[str, int]

    def index(self):
        return build_index(self.documents)

    def embeddings(self) -> EmbeddingTable:
        return EmbeddingTable(self.tokens, self.vectors)

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        """Write corpus/queries (JSON lines), qrels, word vectors and a config file."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "corpus": out / "corpus.jsonl",
            "queries": out / "queries.jsonl",
            "qrels": out / "qrels.txt",
            "embeddings": out / "embeddings.txt",
            "config": out / "experiment.cfg",
        }
        with open(paths["corpus"], "w", encoding="utf-8", newline="\n") as fh:
            for d in self.documents:
                fh.write(json.dumps({"id": d.doc_id, "text": " ".join(d.terms)}) + "\n")
        with open(paths["queries"], "w", encoding="utf-8", newline="\n") as fh:
            for q in self.queries:
                fh.write(json.dumps({"id": q.query_id, "text": " ".join(q.terms)}) + "\n")
        self.qrels.write(paths["qrels"])
        save_embeddings(paths["embeddings"], self.tokens, self.vectors)
        paths["config"].write_text(
            "corpus = corpus.jsonl\nqueries = queries.jsonl\nqrels = qrels.txt\n"
            "embeddings = embeddings.txt\noutput = out\ndepth = 100\n"
            f"seed = {self.spec.seed}\n",
            encoding="utf-8",
        )
        return paths


def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def generate(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticCollection:
    rng = np.random.default_rng(spec.seed)
    half = spec.words_per_topic // 2
    topic_words = [[f"t{t:02d}w{i:03d}" for i in range(spec.words_per_topic)] for t in range(spec.n_topics)]
    dialects = [(words[:half], words[half:]) for words in topic_words]
    background = [f"bg{i:04d}" for i in range(spec.background_words)]
    dialect_p = _zipf_weights(half, spec.zipf)
    background_p = _zipf_weights(spec.background_words, spec.zipf)

    centers = rng.standard_normal((spec.n_topics, spec.dim))
    tokens, vectors = [], []
    for t, words in enumerate(topic_words):
        noise = rng.standard_normal((len(words), spec.dim))
        tokens.extend(words)
        vectors.append(centers[t] + spec.topic_spread * noise)
    tokens.extend(background)
    vectors.append(rng.standard_normal((spec.background_words, spec.dim)))
    vectors = np.concatenate(vectors)

    dialect_cdf = np.cumsum(dialect_p)
    background_cdf = np.cumsum(background_p)
    vocab = np.array([w for words in topic_words for w in words] + background, dtype=object)

    def draw(cdf, n):
        return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(cdf) - 1)

    documents, doc_topic = [], {}
    for i in range(spec.n_docs):
        topic = i % spec.n_topics
        confuser = (topic - 1) % spec.n_topics
        dialect = int(rng.integers(2))
        length = int(rng.integers(spec.doc_len[0], spec.doc_len[1] + 1))
        kinds = rng.choice(4, size=length, p=[
            spec.topic_share, spec.noise_share, spec.confuser_share,
            1.0 - spec.topic_share - spec.noise_share - spec.confuser_share])
        ids = np.empty(length, dtype=np.int64)
        on_topic = kinds == 0
        n = int(on_topic.sum())
        d = np.where(rng.random(n) >= spec.other_dialect, dialect, 1 - dialect)
        ids[on_topic] = topic * spec.words_per_topic + d * half + draw(dialect_cdf, n)
        noisy = kinds == 1
        n = int(noisy.sum())
        other = rng.integers(spec.n_topics - 1, size=n)
        other += other >= topic
        ids[noisy] = other * spec.words_per_topic + rng.integers(2, size=n) * half + draw(dialect_cdf, n)
        confused = kinds == 2
        ids[confused] = confuser * spec.words_per_topic + draw(dialect_cdf, int(confused.sum()))
        rest = kinds == 3
        ids[rest] = spec.n_topics * spec.words_per_topic + draw(background_cdf, int(rest.sum()))
        doc_id = f"D{i:05d}"
        documents.append(Document(doc_id, tuple(vocab[ids].tolist())))
        doc_topic[doc_id] = topic

    queries = []
    qrels = Qrels()
    for j in range(spec.n_queries):
        topic = j % spec.n_topics
        n_terms = int(rng.integers(spec.query_len[0], spec.query_len[1] + 1))
        picks = rng.choice(half, size=n_terms, replace=False, p=dialect_p)
        qid = f"Q{j:03d}"
        queries.append(Query(qid, tuple(dialects[topic][0][p] for p in sorted(picks))))
        for doc_id, t in doc_topic.items():
            qrels.add(qid, doc_id, 1 if t == topic else 0)
    return SyntheticCollection(spec, documents, queries, qrels, tokens, vectors, doc_topic)
