"""Text preprocessing, the inverted index, and tf-idf document summaries."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

from nprf.porter import stem

INDEX_MAGIC = "NPRFIDX1"

_SPLIT = re.compile(r"[^0-9a-z]+")


class CorpusError(ValueError):
    """Malformed corpus input or an inconsistent index operation."""


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a stopword list, one word per line. ``None`` loads the bundled English list."""
    if path is None:
        text = resources.files("nprf.data").joinpath("stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def tokenize(raw_text: str) -> list[str]:
    return [t for t in _SPLIT.split(raw_text.lower()) if t]


def preprocess(raw_text: str, stopwords: Iterable[str] = frozenset()) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop stopwords, Porter-stem.

    >>> preprocess("running runners ran")
    ['run', 'runner', 'ran']
    """
    stop = stopwords if isinstance(stopwords, (set, frozenset)) else set(stopwords)
    return [stem(t) for t in tokenize(raw_text) if t not in stop]


@dataclass(frozen=True)
class Document:
    doc_id: str
    terms: tuple[str, ...]

    @property
    def length(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class TermWeight:
    term: str
    weight: float


@dataclass
class CorpusIndex:
    """Inverted index over preprocessed documents.

    ``postings[term]`` is a list of ``(doc_id, tf)`` sorted by doc_id. The
    documents themselves are kept so feedback summaries and interaction
    matrices can be built from the same object.
    """

    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    documents: dict[str, Document]
    avg_doc_len: float
    term_freqs: dict[str, dict[str, int]] = field(repr=False)

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def vocabulary(self) -> frozenset[str]:
        return frozenset(self.postings)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def tf(self, term: str, doc_id: str) -> int:
        return self.term_freqs[doc_id].get(term, 0)

    def idf(self, term: str) -> float:
        """Plain ``ln(N / df)`` used for tf-idf weights (0 for unseen terms)."""
        df = self.df(term)
        if df == 0:
            return 0.0
        return math.log(self.doc_count / df)

    def document(self, doc_id: str) -> Document:
        try:
            return self.documents[doc_id]
        except KeyError:
            raise CorpusError(f"unknown document {doc_id!r}") from None

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.documents

    def save(self, path: str | Path) -> None:
        """Persist the index. Only the documents are stored; statistics are rebuilt on load."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{INDEX_MAGIC} {self.doc_count}\n")
            for doc_id in sorted(self.documents):
                doc = self.documents[doc_id]
                fh.write(json.dumps([doc_id, list(doc.terms)], ensure_ascii=False))
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "CorpusIndex":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2 or header[0] != INDEX_MAGIC:
                raise CorpusError(f"{path}: not an index file (bad magic header)")
            docs = []
            for lineno, line in enumerate(fh, start=2):
                try:
                    doc_id, terms = json.loads(line)
                except (ValueError, TypeError) as exc:
                    raise CorpusError(f"{path}:{lineno}: corrupt index record") from exc
                docs.append(Document(doc_id, tuple(terms)))
        if len(docs) != int(header[1]):
            raise CorpusError(f"{path}: expected {header[1]} documents, found {len(docs)}")
        return build_index(docs)


def build_index(docs: Iterable[Document]) -> CorpusIndex:
    """Build an index; the result does not depend on input order."""
    documents: dict[str, Document] = {}
    for doc in docs:
        if doc.doc_id in documents:
            raise CorpusError(f"duplicate document id {doc.doc_id!r}")
        documents[doc.doc_id] = doc
    if not documents:
        raise CorpusError("cannot index an empty corpus")

    order = sorted(documents)
    postings: dict[str, list[tuple[str, int]]] = {}
    term_freqs: dict[str, dict[str, int]] = {}
    doc_lengths: dict[str, int] = {}
    total = 0
    for doc_id in order:
        doc = documents[doc_id]
        counts: dict[str, int] = {}
        for t in doc.terms:
            counts[t] = counts.get(t, 0) + 1
        term_freqs[doc_id] = counts
        doc_lengths[doc_id] = doc.length
        total += doc.length
        for t in sorted(counts):
            postings.setdefault(t, []).append((doc_id, counts[t]))
    postings = {t: postings[t] for t in sorted(postings)}
    avg = total / len(order)
    if avg <= 0:
        raise CorpusError("all documents are empty after preprocessing")
    return CorpusIndex(
        postings=postings,
        doc_lengths=doc_lengths,
        documents={d: documents[d] for d in order},
        avg_doc_len=avg,
        term_freqs=term_freqs,
    )


def tfidf_summary(doc: Document | str, index: CorpusIndex, k: int) -> list[TermWeight]:
    """Top-``k`` distinct terms of ``doc`` by ``tf * ln(N/df)``.

    Ties are broken by term so the ordering is total.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    doc_id = doc if isinstance(doc, str) else doc.doc_id
    counts = index.term_freqs.get(doc_id)
    if counts is None:
        raise CorpusError(f"document {doc_id!r} is not indexed")
    weighted = [TermWeight(t, tf * index.idf(t)) for t, tf in counts.items()]
    weighted.sort(key=lambda tw: (-tw.weight, tw.term))
    return weighted[:k]


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def read_corpus(path: str | Path, stopwords: Iterable[str]) -> Iterator[Document]:
    """Yield preprocessed documents from a JSON-lines file of ``{"id", "text"}`` objects."""
    stop = frozenset(stopwords)
    for lineno, obj in iter_jsonl(path):
        doc_id, text = obj.get("id"), obj.get("text")
        if not isinstance(doc_id, str) or not isinstance(text, str):
            raise CorpusError(f"{path}:{lineno}: record needs string fields 'id' and 'text'")
        yield Document(doc_id, tuple(preprocess(text, stop)))
