"""Pairwise hinge-loss training with Adam, model selection and cross-validation."""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from nprf.config import ExperimentConfig
from nprf.core import FeedbackSet, NprfModel, PairFeatures, build_feedback_set, rerank
from nprf.corpus import CorpusIndex
from nprf.embeddings import EmbeddingTable
from nprf.evaluation import MetricReport, Qrels, evaluate
from nprf.first_stage import Bm25Params, Query, RunList, bm25_search
from nprf.nirm import Params

log = logging.getLogger(__name__)


def hinge_loss(rel_plus: float, rel_minus: float) -> float:
    return max(0.0, 1.0 - rel_plus + rel_minus)


def hinge_grad(rel_plus, rel_minus):
    """Subgradients (d/d rel_plus, d/d rel_minus); zero on the boundary."""
    active = (1.0 - np.asarray(rel_plus) + np.asarray(rel_minus)) > 0.0
    g = active.astype(np.float64)
    return -g, g


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """One bias-corrected Adam update. Returns new params; ``state`` is updated in place."""
    for name, g in grads.items():
        if name not in params or np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient block {name!r} does not match parameters")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = np.asarray(grads.get(name, np.zeros_like(p)), dtype=np.float64)
        m = state.first.get(name, np.zeros_like(p))
        v = state.second.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.first[name], state.second[name] = m, v
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        out[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out, state


# ---------------------------------------------------------------------------
# Data: the experiment bundle and training instances
# ---------------------------------------------------------------------------


class Experiment:
    """Everything a training run reads: index, embeddings, queries, qrels and
    first-stage runs, plus a per-query cache of pair features."""

    def __init__(
        self,
        index: CorpusIndex,
        table: EmbeddingTable,
        queries: Sequence[Query],
        qrels: Qrels,
        bm25: Bm25Params = Bm25Params(),
        pool_depth: int = 1000,
        initial_runs: Mapping[str, RunList] | None = None,
    ):
        self.index = index
        self.table = table
        self.queries = {q.query_id: q for q in queries}
        self.qrels = qrels
        self.bm25 = bm25
        if initial_runs is None:
            initial_runs = {q.query_id: bm25_search(q, index, bm25, pool_depth) for q in queries}
        self.initial_runs = dict(initial_runs)
        self._features: dict[tuple, PairFeatures] = {}

    @property
    def query_ids(self) -> list[str]:
        return sorted(self.queries)

    def feedback(self, qid: str, m: int, k: int) -> FeedbackSet:
        return build_feedback_set(self.queries[qid], self.initial_runs[qid], self.index, m, k)

    def features(self, qid: str, model: NprfModel, k: int, max_doc_terms: int | None = None) -> PairFeatures:
        key = (qid, model.scorer.name, model.m, k, model.uses_gates, max_doc_terms)
        feats = self._features.get(key)
        if feats is None:
            feats = PairFeatures(self.feedback(qid, model.m, k), model, self.table, self.index, max_doc_terms)
            self._features[key] = feats
        return feats

    def warm(self, qids: Sequence[str], model: NprfModel, k: int, depth: int,
             max_doc_terms: int | None = None, threads: int | None = None) -> None:
        """Precompute pair features for the top ``depth`` documents of each query."""
        feats = [self.features(q, model, k, max_doc_terms) for q in qids]

        def work(i):
            feats[i].inputs(self.initial_runs[qids[i]].doc_ids[:depth])

        if threads and threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                list(pool.map(work, range(len(qids))))
        else:
            for i in range(len(qids)):
                work(i)

    def clear_cache(self) -> None:
        self._features.clear()

    def baseline_runs(self, depth: int) -> dict[str, RunList]:
        return {q: r.truncate(depth) for q, r in self.initial_runs.items()}


@dataclass(frozen=True)
class TrainingInstance:
    query_id: str
    d_plus: str
    d_minus: str


def candidate_pools(qrels: Qrels, initial_runs: Mapping[str, RunList], pool_depth: int = 1000):
    """Per query: (judged relevant, judged non-relevant) doc ids within the top ``pool_depth``."""
    pools = {}
    for qid in sorted(initial_runs):
        grades = qrels.grades(qid)
        docs = initial_runs[qid].doc_ids[:pool_depth]
        pools[qid] = (
            [d for d in docs if grades.get(d, 0) > 0],
            [d for d in docs if d in grades and grades[d] == 0],
        )
    return pools


def sample_instances(
    qrels: Qrels,
    initial_runs: Mapping[str, RunList],
    per_query: int = 16,
    seed: int = 0,
    pool_depth: int = 1000,
    replacement: bool = True,
) -> list[TrainingInstance]:
    """Draw ``per_query`` (relevant, non-relevant) pairs per query uniformly.

    Without replacement a query contributes at most ``|pos| * |neg|`` distinct pairs.
    """
    rng = np.random.default_rng(seed)
    instances, skipped = [], 0
    for qid, (pos, neg) in candidate_pools(qrels, initial_runs, pool_depth).items():
        if not pos or not neg:
            skipped += 1
            continue
        if replacement:
            ip = rng.integers(len(pos), size=per_query)
            ineg = rng.integers(len(neg), size=per_query)
        else:
            flat = rng.choice(len(pos) * len(neg), size=min(per_query, len(pos) * len(neg)), replace=False)
            ip, ineg = np.divmod(flat, len(neg))
        instances.extend(TrainingInstance(qid, pos[a], neg[b]) for a, b in zip(ip, ineg))
    if skipped:
        log.info("skipped %d queries without both relevant and non-relevant candidates", skipped)
    if not instances:
        raise ValueError("no query has both a relevant and a non-relevant candidate")
    return instances


# ---------------------------------------------------------------------------
# Folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fold:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]


def make_folds(query_ids: Sequence[str], seed: int, n_folds: int = 5) -> list[Fold]:
    """Shuffle queries and split into ``n_folds`` partitions (remainder to the earliest).

    Fold i tests on partition i, validates on partition i+1 and trains on the rest.
    """
    qids = sorted(query_ids)
    if len(qids) < n_folds:
        raise ValueError(f"need at least {n_folds} queries for {n_folds}-fold cross-validation")
    order = np.random.default_rng(seed).permutation(len(qids))
    shuffled = [qids[i] for i in order]
    base, extra = divmod(len(qids), n_folds)
    parts, start = [], 0
    for i in range(n_folds):
        size = base + (1 if i < extra else 0)
        parts.append(tuple(shuffled[start: start + size]))
        start += size
    folds = []
    for i in range(n_folds):
        val = (i + 1) % n_folds
        train = tuple(q for j, p in enumerate(parts) if j not in (i, val) for q in p)
        folds.append(Fold(train, parts[val], parts[i]))
    return folds


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _derive_seed(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


def batch_loss_and_grads(model: NprfModel, params: Params, exp: Experiment,
                         batch: Sequence[TrainingInstance], k: int, max_doc_terms=None):
    """Mean hinge loss over ``batch`` and its gradient.

    Returns ``(mean_loss, per_instance_losses, grads)``.
    """
    inputs, gates = [], []
    for inst in batch:
        feats = exp.features(inst.query_id, model, k, max_doc_terms)
        inputs.append(feats.inputs([inst.d_plus, inst.d_minus]))
        gates.append(feats.gate_matrix(2))
    stacked = type(inputs[0]).stack(inputs)
    scores, cache = model.forward(params, stacked, np.concatenate(gates))
    plus, minus = scores[0::2], scores[1::2]
    losses = np.maximum(0.0, 1.0 - plus + minus)
    gp, gm = hinge_grad(plus, minus)
    upstream = np.empty_like(scores)
    upstream[0::2], upstream[1::2] = gp / len(batch), gm / len(batch)
    grads = model.backward(params, cache, upstream)
    return float(losses.mean()), losses, grads


def rerank_queries(model: NprfModel, params: Params, exp: Experiment, qids: Sequence[str],
                   k: int, depth: int, max_doc_terms=None, add_query_score=False) -> dict[str, RunList]:
    runs = {}
    for qid in qids:
        feats = exp.features(qid, model, k, max_doc_terms)
        runs[qid] = rerank(exp.queries[qid], exp.initial_runs[qid], model, params, exp.table, exp.index,
                           k=k, depth=depth, features=feats, add_query_score=add_query_score)
    return runs


def mean_ap(runs: Mapping[str, RunList], qrels: Qrels) -> float:
    return evaluate(runs, qrels).mean("map")


@dataclass
class TrainResult:
    model: NprfModel
    params: Params
    best_epoch: int
    validation_map: list[float]
    epoch_loss: list[float]
    input_digest: str


def _consumed_digest(fold: Fold, instances: Sequence[TrainingInstance], qrels: Qrels) -> str:
    h = hashlib.sha256()
    for qid in fold.train + ("|",) + fold.validation:
        h.update(qid.encode() + b"\0")
    for inst in instances:
        h.update(f"{inst.query_id}\0{inst.d_plus}\0{inst.d_minus}\n".encode())
    for qid in sorted(fold.validation):
        for doc, g in sorted(qrels.grades(qid).items()):
            h.update(f"{qid}\0{doc}\0{g}\n".encode())
    return h.hexdigest()


def train(exp: Experiment, fold: Fold, config: ExperimentConfig, fold_no: int = 0) -> TrainResult:
    """Train on ``fold.train`` and keep the epoch with the best validation MAP.

    Only the fold's training and validation queries are read.
    """
    model = NprfModel(config.model, config.variant, config.m)
    params = model.init_params(_derive_seed(config.seed, fold_no, 0))
    train_runs = {q: exp.initial_runs[q] for q in fold.train}
    instances = sample_instances(exp.qrels, train_runs, config.per_query,
                                 seed=int(_derive_seed(config.seed, fold_no, 1).integers(2**32)),
                                 pool_depth=config.pool_depth, replacement=config.replacement)
    digest = _consumed_digest(fold, instances, exp.qrels)
    exp.warm(list(fold.train) + list(fold.validation), model, config.k, config.depth,
             config.max_doc_terms, config.threads)

    state = AdamState(lr=config.lr)
    best, best_map, best_epoch = None, -1.0, 0
    val_maps, epoch_losses = [], []
    for epoch in range(1, config.epochs + 1):
        order = _derive_seed(config.seed, fold_no, 2, epoch).permutation(len(instances))
        losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [instances[i] for i in order[start: start + config.batch_size]]
            loss, per_inst, grads = batch_loss_and_grads(model, params, exp, batch, config.k, config.max_doc_terms)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
            losses.append(per_inst)
            params, state = adam_step(params, grads, state)
        epoch_losses.append(float(np.concatenate(losses).mean()))
        runs = rerank_queries(model, params, exp, fold.validation, config.k, config.depth,
                              config.max_doc_terms, config.add_query_score)
        val_map = mean_ap(runs, exp.qrels)
        val_maps.append(val_map)
        log.debug("fold %d epoch %d loss %.4f val MAP %.4f", fold_no, epoch, epoch_losses[-1], val_map)
        if val_map > best_map:
            best, best_map, best_epoch = {n: v.copy() for n, v in params.items()}, val_map, epoch
    return TrainResult(model, best, best_epoch, val_maps, epoch_losses, digest)


@dataclass
class CrossValidationResult:
    folds: list[Fold]
    results: list[TrainResult]
    runs: dict[str, RunList]
    report: MetricReport


def cross_validate(exp: Experiment, config: ExperimentConfig, query_ids: Sequence[str] | None = None) -> CrossValidationResult:
    """Five-fold protocol: train, select on validation MAP, re-rank the test fold.

    Metrics are computed over the union of all test folds.
    """
    qids = list(query_ids) if query_ids is not None else exp.query_ids
    folds = make_folds(qids, config.seed, config.folds)
    results, runs = [], {}
    for i, fold in enumerate(folds):
        res = train(exp, fold, config, fold_no=i)
        results.append(res)
        runs.update(rerank_queries(res.model, res.params, exp, fold.test, config.k, config.depth,
                                   config.max_doc_terms, config.add_query_score))
        log.info("fold %d: best epoch %d, validation MAP %.4f", i, res.best_epoch, max(res.validation_map))
    return CrossValidationResult(folds, results, runs, evaluate(runs, exp.qrels))
