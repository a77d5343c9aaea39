"""Pre-trained word vectors and the cosine interaction matrices built from them."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from nprf.corpus import TermWeight

log = logging.getLogger(__name__)


class OovPolicy(str, Enum):
    SKIP_TERM = "skip_term"
    ZERO_VECTOR = "zero_vector"


class EmbeddingError(ValueError):
    pass


class EmbeddingTable:
    """Token -> unit vector lookup.

    Vectors are L2-normalised once at construction, so cosine similarity is a
    plain dot product. Tokens whose vector has zero norm are kept out of the
    lookup and behave as out-of-vocabulary.
    """

    def __init__(self, tokens: Sequence[str], vectors, oov_policy=OovPolicy.SKIP_TERM):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens) or vectors.shape[1] < 1:
            raise EmbeddingError(f"vectors shape {vectors.shape} does not match {len(tokens)} tokens")
        self.oov_policy = OovPolicy(oov_policy)
        self.dim = vectors.shape[1]
        self.tokens: list[str] = []
        rows = []
        self._row: dict[str, int] = {}
        self.size = 0
        seen = set()
        for tok, vec in zip(tokens, vectors):
            if tok in seen:
                continue
            seen.add(tok)
            self.size += 1
            norm = np.sqrt(vec @ vec)
            if norm == 0.0 or not np.isfinite(norm):
                continue
            self._row[tok] = len(rows)
            self.tokens.append(tok)
            rows.append(vec / norm)
        self.unit = np.array(rows, dtype=np.float64).reshape(len(rows), self.dim)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, token: str) -> bool:
        return token in self._row

    def vector(self, token: str) -> np.ndarray | None:
        """Unit vector for ``token``, or ``None`` when out of vocabulary."""
        row = self._row.get(token)
        return None if row is None else self.unit[row]

    def row_ids(self, tokens: Sequence[str]) -> np.ndarray:
        """Row index per token, -1 for out-of-vocabulary tokens."""
        return np.array([self._row.get(t, -1) for t in tokens], dtype=np.int64)

    def with_policy(self, oov_policy) -> "EmbeddingTable":
        clone = object.__new__(EmbeddingTable)
        clone.__dict__.update(self.__dict__)
        clone.oov_policy = OovPolicy(oov_policy)
        return clone


def load_embeddings(path: str | Path, oov_policy=OovPolicy.SKIP_TERM) -> EmbeddingTable:
    """Read the textual word-vector format: a ``V D`` header then ``token v1 .. vD`` lines."""
    tokens: list[str] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8", newline=None) as fh:
        header = fh.readline().split()
        try:
            if len(header) != 2:
                raise ValueError
            declared, dim = int(header[0]), int(header[1])
            if declared < 0 or dim < 1:
                raise ValueError
        except ValueError:
            raise EmbeddingError(f"{path}:1: malformed header, expected 'V D'") from None
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\r\n").split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise EmbeddingError(
                    f"{path}:{lineno}: expected {dim} components, found {len(parts) - 1}"
                )
            try:
                rows.append([float(x) for x in parts[1:]])
            except ValueError:
                raise EmbeddingError(f"{path}:{lineno}: non-numeric component") from None
            tokens.append(parts[0])
    if len(tokens) != declared:
        log.warning("%s: header declares %d vectors, read %d", path, declared, len(tokens))
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return EmbeddingTable(tokens, vectors, oov_policy)


def save_embeddings(path: str | Path, tokens: Sequence[str], vectors) -> None:
    vectors = np.asarray(vectors, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(tokens)} {vectors.shape[1]}\n")
        for tok, vec in zip(tokens, vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def random_embeddings(tokens: Sequence[str], dim: int, seed: int) -> EmbeddingTable:
    """Standard-normal vectors from ``numpy.random.default_rng(seed)`` (PCG64), one row per token."""
    rng = np.random.default_rng(seed)
    return EmbeddingTable(list(tokens), rng.standard_normal((len(tokens), dim)))


def cosine(a: str, b: str, table: EmbeddingTable) -> float | None:
    """Cosine similarity of two tokens.

    Identical in-vocabulary tokens give exactly 1.0. Out-of-vocabulary tokens
    give ``None`` under ``skip_term`` and 0.0 under ``zero_vector``.
    """
    va, vb = table.vector(a), table.vector(b)
    if va is None or vb is None:
        return None if table.oov_policy is OovPolicy.SKIP_TERM else 0.0
    if a == b:
        return 1.0
    return float(min(1.0, max(-1.0, va @ vb)))


def similarity_block(table: EmbeddingTable, row_ids: np.ndarray, col_ids: np.ndarray) -> np.ndarray:
    """Cosine grid between two lists of in-vocabulary row ids.

    Equal ids are set to exactly 1.0; everything is clamped to [-1, 1].
    """
    sims = table.unit[row_ids] @ table.unit[col_ids].T
    np.clip(sims, -1.0, 1.0, out=sims)
    sims[row_ids[:, None] == col_ids[None, :]] = 1.0
    return sims


@dataclass(frozen=True)
class InteractionMatrix:
    rows: tuple[str, ...]
    cols: tuple[str, ...]
    values: np.ndarray
    row_weights: tuple[float, ...] = ()

    @property
    def is_empty(self) -> bool:
        return self.values.size == 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def interaction_matrix(
    summary: Sequence[TermWeight] | Sequence[str],
    target: Sequence[str],
    table: EmbeddingTable,
) -> InteractionMatrix:
    """Cosine similarity of every summary term against every target term.

    ``target`` is the target document's term sequence (or a ``Document``).
    Under ``skip_term`` out-of-vocabulary rows and columns are dropped, which
    may leave an empty matrix; callers check ``is_empty``.
    """
    if len(summary) == 0:
        raise ValueError("summary must be non-empty")
    row_terms = [s.term if isinstance(s, TermWeight) else s for s in summary]
    weights = [s.weight if isinstance(s, TermWeight) else 1.0 for s in summary]
    col_terms = list(getattr(target, "terms", target))
    rid, cid = table.row_ids(row_terms), table.row_ids(col_terms)

    if table.oov_policy is OovPolicy.SKIP_TERM:
        rkeep, ckeep = rid >= 0, cid >= 0
        rows = tuple(t for t, keep in zip(row_terms, rkeep) if keep)
        row_w = tuple(w for w, keep in zip(weights, rkeep) if keep)
        cols = tuple(t for t, keep in zip(col_terms, ckeep) if keep)
        if not rows or not cols:
            return InteractionMatrix(rows, cols, np.zeros((len(rows), len(cols))), row_w)
        values = similarity_block(table, rid[rkeep], cid[ckeep])
        return InteractionMatrix(rows, cols, values, row_w)

    values = np.zeros((len(row_terms), len(col_terms)))
    rin, cin = rid >= 0, cid >= 0
    if rin.any() and cin.any():
        values[np.ix_(rin, cin)] = similarity_block(table, rid[rin], cid[cin])
    return InteractionMatrix(tuple(row_terms), tuple(col_terms), values, tuple(weights))
