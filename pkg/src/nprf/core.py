"""Neural pseudo relevance feedback: feedback sets, gating and score combination.

A target document is scored against each of the top-m feedback documents
with a shared neural scorer; each score is weighted by the feedback
document's min-max normalised first-stage score and the weighted scores are
combined either by direct summation (``ds``) or by a small tanh network
(``ff``). ``ff_prime`` is the ``ff`` network with every gate fixed at 1.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from nprf.corpus import CorpusIndex, Document, TermWeight, tfidf_summary
from nprf.embeddings import EmbeddingTable, interaction_matrix, similarity_block
from nprf.first_stage import Query, RunList
from nprf.nirm import (
    HIDDEN,
    LOG_EPS,
    Drmm,
    DrmmInputs,
    ForwardCache,
    Knrm,
    KnrmInputs,
    Params,
    histogram_bin_index,
    kernel_sums,
    load_params,
    make_scorer,
    params_digest,
    save_params,
    uniform_init,
    _check_cache,
)

log = logging.getLogger(__name__)

VARIANTS = ("ds", "ff", "ff_prime")


@dataclass(frozen=True)
class FeedbackMember:
    doc_id: str
    rel_q_score: float
    summary: tuple[TermWeight, ...]


@dataclass(frozen=True)
class FeedbackSet:
    query_id: str
    members: tuple[FeedbackMember, ...]

    def __len__(self):
        return len(self.members)

    @property
    def rel_q_scores(self) -> np.ndarray:
        return np.array([mb.rel_q_score for mb in self.members], dtype=np.float64)

    def permuted(self, order: Sequence[int]) -> "FeedbackSet":
        return FeedbackSet(self.query_id, tuple(self.members[i] for i in order))

    def to_json(self) -> str:
        return json.dumps({
            "query_id": self.query_id,
            "members": [
                {"doc_id": mb.doc_id, "rel_q": mb.rel_q_score,
                 "summary": [[tw.term, tw.weight] for tw in mb.summary]}
                for mb in self.members
            ],
        })

    @classmethod
    def from_json(cls, line: str) -> "FeedbackSet":
        obj = json.loads(line)
        return cls(obj["query_id"], tuple(
            FeedbackMember(mb["doc_id"], float(mb["rel_q"]),
                           tuple(TermWeight(t, float(w)) for t, w in mb["summary"]))
            for mb in obj["members"]
        ))


def build_feedback_set(query: Query, initial_run: RunList, index: CorpusIndex, m: int = 10, k: int = 20) -> FeedbackSet:
    """Top ``m`` documents of the initial run, each summarised by its top-``k`` tf-idf terms."""
    if m < 1 or k < 1:
        raise ValueError("m and k must be >= 1")
    if len(initial_run) == 0:
        raise ValueError(f"query {query.query_id}: empty initial run, no feedback possible")
    members = tuple(
        FeedbackMember(e.doc_id, e.score, tuple(tfidf_summary(e.doc_id, index, k)))
        for e in initial_run.entries[:m]
    )
    return FeedbackSet(query.query_id, members)


def normalize_gates(rel_q_scores) -> np.ndarray:
    """Smoothed min-max normalisation into [0.5, 1]; all ones when max == min."""
    s = np.asarray(rel_q_scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("need at least one feedback score")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.ones_like(s)
    return 0.5 + 0.5 * ((s - lo) / (hi - lo))


@dataclass(frozen=True)
class GatedScores:
    raw: np.ndarray
    gates: np.ndarray

    @property
    def gated(self) -> np.ndarray:
        return self.raw * self.gates


class NprfModel:
    """Architecture of an NPRF ranker: embedded scorer, combination variant and width m.

    Parameters live in a flat dict; scorer weights are prefixed ``rel.`` and
    the combination network's ``ff.``.
    """

    def __init__(self, scorer: Drmm | Knrm | str = "drmm", variant: str = "ds", m: int = 10, hidden: int = HIDDEN):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if m < 1:
            raise ValueError("m must be >= 1")
        self.scorer = make_scorer(scorer) if isinstance(scorer, str) else scorer
        self.variant = variant
        self.m = m
        self.hidden = hidden

    @property
    def name(self) -> str:
        return f"nprf-{self.scorer.name}-{self.variant}"

    @property
    def descriptor(self) -> str:
        return f"m={self.m},ffhidden={self.hidden},{self.scorer.descriptor}"

    @property
    def uses_gates(self) -> bool:
        return self.variant != "ff_prime"

    def shapes(self):
        shapes = {f"rel.{n}": s for n, s in self.scorer.shapes().items()}
        if self.variant != "ds":
            m, h = self.m, self.hidden
            shapes.update({
                "ff.W1": ((m, h), m, h),
                "ff.b1": ((h,), m, h),
                "ff.w2": ((h,), h, 1),
                "ff.b2": ((), h, 1),
            })
        return shapes

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        return {n: s[0] for n, s in self.shapes().items()}

    def init_params(self, rng: np.random.Generator) -> Params:
        return uniform_init(self.shapes(), rng)

    def gates_for(self, feedback: FeedbackSet) -> np.ndarray:
        """Gate vector padded with zeros to width m."""
        n = min(len(feedback), self.m)
        g = np.zeros(self.m)
        g[:n] = normalize_gates(feedback.rel_q_scores[:n]) if self.uses_gates else 1.0
        return g

    @staticmethod
    def _scorer_params(params: Params) -> Params:
        return {n[4:]: v for n, v in params.items() if n.startswith("rel.")}

    def combine(self, params: Params, gated: np.ndarray) -> np.ndarray:
        if self.variant == "ds":
            return gated.sum(axis=1)
        hidden = np.tanh(gated @ params["ff.W1"] + params["ff.b1"])
        return hidden @ params["ff.w2"] + params["ff.b2"]

    def forward(self, params: Params, inputs, gates: np.ndarray):
        """Score ``n`` targets.

        ``inputs`` holds scorer inputs for ``n * m`` pairs in target-major
        order; ``gates`` is (n, m). Returns ``(scores, cache)``.
        """
        gates = np.asarray(gates, dtype=np.float64)
        n = gates.shape[0]
        if gates.shape[1] != self.m or len(inputs) != n * self.m:
            raise ValueError(f"expected {n}x{self.m} pairs, got gates {gates.shape} and {len(inputs)} pairs")
        raw, scache = self.scorer.forward(self._scorer_params(params), inputs)
        raw = raw.reshape(n, self.m)
        gated = raw * gates
        if self.variant == "ds":
            scores, hidden = gated.sum(axis=1), None
        else:
            hidden = np.tanh(gated @ params["ff.W1"] + params["ff.b1"])
            scores = hidden @ params["ff.w2"] + params["ff.b2"]
        cache = ForwardCache(params_digest(params), dict(
            scorer=scache, raw=raw, gates=gates, gated=gated, hidden=hidden))
        return scores, cache

    def backward(self, params: Params, cache: ForwardCache, upstream) -> Params:
        c = _check_cache(params, cache)
        n = c["gates"].shape[0]
        u = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (n,))
        grads: Params = {}
        if self.variant == "ds":
            dgated = np.repeat(u[:, None], self.m, axis=1)
        else:
            hidden = c["hidden"]
            dpre = (u[:, None] * params["ff.w2"]) * (1.0 - hidden**2)
            grads["ff.W1"] = c["gated"].T @ dpre
            grads["ff.b1"] = dpre.sum(axis=0)
            grads["ff.w2"] = u @ hidden
            grads["ff.b2"] = np.asarray(u.sum())
            dgated = dpre @ params["ff.W1"].T
        draw = (dgated * c["gates"]).ravel()
        for name, g in self.scorer.backward(self._scorer_params(params), c["scorer"], draw).items():
            grads[f"rel.{name}"] = g
        return grads

    def save(self, path: str | Path, params: Params) -> None:
        save_params(path, self.name, self.descriptor, params)

    @classmethod
    def load(cls, path: str | Path) -> tuple["NprfModel", Params]:
        name, descriptor, flat = load_params(path)
        parts = name.split("-")
        if len(parts) != 3 or parts[0] != "nprf":
            raise ValueError(f"{path}: {name!r} is not an NPRF checkpoint")
        fields = dict(kv.split("=") for kv in descriptor.split(","))
        model = cls(parts[1], parts[2], int(fields["m"]), int(fields["ffhidden"]))
        shapes = model.param_shapes()
        if set(shapes) != set(flat):
            raise ValueError(f"{path}: parameter blocks do not match {name}")
        return model, {n: flat[n].reshape(shapes[n]) for n in shapes}


class PairFeatures:
    """Scorer inputs for (feedback member, target document) pairs of one query.

    Similarities are computed once per distinct target term and pooled with
    term counts, which is equivalent to the full column-by-column matrix
    because both scorers pool over columns. Per-document results are cached:
    DRMM keeps raw bin counts, K-NRM keeps kernel features.
    """

    def __init__(
        self,
        feedback: FeedbackSet,
        model: NprfModel,
        table: EmbeddingTable,
        index: CorpusIndex,
        max_doc_terms: int | None = None,
    ):
        self.model = model
        self.table = table
        self.index = index
        self.max_doc_terms = max_doc_terms
        self.scorer = model.scorer
        members = feedback.members[: model.m]
        self.width = max((len(mb.summary) for mb in members), default=1) or 1
        row_terms, slot_member, slot_pos = [], [], []
        for i, mb in enumerate(members):
            pos = 0
            for tw in mb.summary:
                if tw.term in table:
                    row_terms.append(tw.term)
                    slot_member.append(i)
                    slot_pos.append(pos)
                    pos += 1
        self.row_ids = table.row_ids(row_terms)
        self.slot_member = np.array(slot_member, dtype=np.int64)
        self.slot_pos = np.array(slot_pos, dtype=np.int64)
        m = model.m
        self.idf = np.zeros((m, self.width))
        self.mask = np.zeros((m, self.width), dtype=bool)
        self.idf[self.slot_member, self.slot_pos] = [index.idf(t) for t in row_terms]
        self.mask[self.slot_member, self.slot_pos] = True
        self.member_has_rows = self.mask.any(axis=1)
        self.gates = model.gates_for(feedback)
        self._cache: dict[str, tuple] = {}

    def _target_columns(self, doc_id: str):
        terms = self.index.document(doc_id).terms
        if self.max_doc_terms is not None:
            terms = terms[: self.max_doc_terms]
        ids = self.table.row_ids(terms)
        ids = ids[ids >= 0]
        if ids.size == 0:
            return ids, ids
        uniq, counts = np.unique(ids, return_counts=True)
        return uniq, counts.astype(np.float64)

    def _compute(self, doc_id: str):
        m = self.model.m
        cols, counts = self._target_columns(doc_id)
        if isinstance(self.scorer, Drmm):
            bins = self.scorer.bins
            hist = np.zeros((m, self.width, bins), dtype=np.uint16)
            if cols.size and self.row_ids.size:
                sims = similarity_block(self.table, self.row_ids, cols)
                flat = (np.arange(len(self.row_ids))[:, None] * bins + histogram_bin_index(sims, bins)).ravel()
                raw = np.bincount(flat, weights=np.broadcast_to(counts, sims.shape).ravel(),
                                  minlength=len(self.row_ids) * bins)
                hist[self.slot_member, self.slot_pos] = raw.reshape(-1, bins).astype(np.uint16)
                return hist, True
            return hist, False
        k = self.scorer.n_kernels
        phi = np.zeros((m, k))
        if cols.size and self.row_ids.size:
            sims = similarity_block(self.table, self.row_ids, cols)
            soft = kernel_sums(sims, self.scorer.mus, self.scorer.sigmas, counts)
            np.add.at(phi, self.slot_member, np.log(np.maximum(soft, LOG_EPS)))
            return phi, True
        return phi, False

    def _get(self, doc_id: str):
        hit = self._cache.get(doc_id)
        if hit is None:
            hit = self._cache[doc_id] = self._compute(doc_id)
        return hit

    def inputs(self, doc_ids: Sequence[str]):
        """Stacked scorer inputs, ``len(doc_ids) * m`` pairs in target-major order."""
        parts = [self._get(d) for d in doc_ids]
        n, m = len(doc_ids), self.model.m
        if isinstance(self.scorer, Drmm):
            hist = np.log1p(np.stack([p[0] for p in parts]).astype(np.float64)).reshape(n * m, self.width, -1)
            has_cols = np.array([p[1] for p in parts])
            mask = self.mask[None] & has_cols[:, None, None]
            return DrmmInputs(hist, np.broadcast_to(self.idf, (n, m, self.width)).reshape(n * m, -1),
                              mask.reshape(n * m, -1))
        phi = np.stack([p[0] for p in parts]).reshape(n * m, -1)
        valid = self.member_has_rows[None] & np.array([p[1] for p in parts])[:, None]
        return KnrmInputs(phi, valid.reshape(-1))

    def gate_matrix(self, n: int) -> np.ndarray:
        return np.broadcast_to(self.gates, (n, self.model.m))


def member_scores(
    feedback: FeedbackSet,
    target: Document,
    model: NprfModel,
    params: Params,
    table: EmbeddingTable,
    index: CorpusIndex,
) -> GatedScores:
    """Per-member raw scorer outputs and gates, computed from full interaction matrices."""
    sp = NprfModel._scorer_params(params)
    raw = np.zeros(model.m)
    for i, mb in enumerate(feedback.members[: model.m]):
        if not mb.summary:
            continue
        matrix = interaction_matrix(mb.summary, target, table)
        if matrix.is_empty:
            continue
        if isinstance(model.scorer, Drmm):
            inputs = DrmmInputs.from_matrix(matrix, [index.idf(t) for t in matrix.rows], model.scorer.bins)
        else:
            inputs = KnrmInputs.from_matrix(matrix, model.scorer.kernels)
        raw[i] = model.scorer.forward(sp, inputs)[0][0]
    return GatedScores(raw, model.gates_for(feedback))


def nprf_score(
    query: Query,
    feedback: FeedbackSet,
    target: Document,
    model: NprfModel,
    params: Params,
    table: EmbeddingTable,
    index: CorpusIndex,
) -> float:
    """rel_D(q, D_q, d) for a single target, built from explicit interaction matrices."""
    if feedback.query_id != query.query_id:
        raise ValueError("feedback set belongs to a different query")
    if model.variant != "ds" and len(feedback) > model.m:
        raise ValueError(f"{model.name} was built for m={model.m}, feedback has {len(feedback)} members")
    gs = member_scores(feedback, target, model, params, table, index)
    return float(model.combine(params, gs.gated[None])[0])


def score_targets(
    features: PairFeatures, params: Params, doc_ids: Sequence[str], chunk: int = 256
) -> np.ndarray:
    out = []
    for start in range(0, len(doc_ids), chunk):
        ids = doc_ids[start: start + chunk]
        scores, _ = features.model.forward(params, features.inputs(ids), features.gate_matrix(len(ids)))
        out.append(scores)
    return np.concatenate(out) if out else np.zeros(0)


def rerank(
    query: Query,
    initial_run: RunList,
    model: NprfModel,
    params: Params,
    table: EmbeddingTable,
    index: CorpusIndex,
    k: int = 20,
    depth: int = 1000,
    feedback: FeedbackSet | None = None,
    features: PairFeatures | None = None,
    add_query_score: bool = False,
    max_doc_terms: int | None = None,
) -> RunList:
    """Re-order the top ``depth`` documents of ``initial_run`` by NPRF score.

    Ties keep the initial order. ``add_query_score`` (experimental, off by
    default) adds the target's own first-stage score, min-max normalised to
    [0, 1] over the re-ranked pool.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    pool = initial_run.truncate(depth)
    if features is None:
        if feedback is None:
            feedback = build_feedback_set(query, initial_run, index, model.m, k)
        features = PairFeatures(feedback, model, table, index, max_doc_terms)
    doc_ids = pool.doc_ids
    scores = score_targets(features, params, doc_ids)
    if add_query_score and len(pool):
        first = np.array([e.score for e in pool.entries])
        span = first.max() - first.min()
        scores = scores + ((first - first.min()) / span if span > 0 else np.ones_like(first))
    order = sorted(range(len(doc_ids)), key=lambda i: (-scores[i], i))
    return RunList.from_scores(query.query_id, [(doc_ids[i], float(scores[i])) for i in order])


def write_feedback(path: str | Path, sets: Sequence[FeedbackSet]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for fs in sets:
            fh.write(fs.to_json() + "\n")


def read_feedback(path: str | Path) -> dict[str, FeedbackSet]:
    with open(path, encoding="utf-8") as fh:
        sets = [FeedbackSet.from_json(line) for line in fh if line.strip()]
    return {fs.query_id: fs for fs in sets}
