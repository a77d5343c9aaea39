"""Scoring one target document with NPRF, step by step.

The synthetic collection has a built-in vocabulary mismatch: a query uses one
"dialect" of its topic, and half of the relevant documents use the other. We
walk through the feedback set, the gates and the per-member scores, then check
that the batched fast path gives the same number.

Run: python3 demos/02_nprf_scoring.py
"""

import numpy as np

from nprf import NprfModel, build_feedback_set, nprf_score
from nprf.core import PairFeatures, member_scores
from nprf.first_stage import bm25_search
from nprf.synthetic import SyntheticSpec, generate

coll = generate(SyntheticSpec(n_docs=400, n_queries=5))
index, table = coll.index(), coll.embeddings()
query = coll.queries[0]
run = bm25_search(query, index, depth=100)
relevant = coll.qrels.relevant(query.query_id)
print(f"query {query.query_id}: {' '.join(query.terms)}")
print(f"{len(relevant)} relevant documents, {sum(d in relevant for d in run.doc_ids)} of them retrieved by BM25")

fb = build_feedback_set(query, run, index, m=5, k=10)
print("\nfeedback documents (top of the BM25 run) and their 10-term summaries:")
for mb in fb.members:
    mark = "rel" if mb.doc_id in relevant else "non"
    print(f"  {mb.doc_id} [{mark}] bm25={mb.rel_q_score:.3f}  {' '.join(t.term for t in mb.summary[:6])} ...")

model = NprfModel("knrm", "ds", m=5)
params = model.init_params(np.random.default_rng(0))
target = index.document(run.doc_ids[30])
gs = member_scores(fb, target, model, params, table, index)
print(f"\ntarget {target.doc_id}; untrained K-NRM scores against each feedback summary:")
for mb, raw, gate in zip(fb.members, gs.raw, gs.gates):
    print(f"  {mb.doc_id}: raw {raw:+.4f} x gate {gate:.3f} = {raw * gate:+.4f}")
score = nprf_score(query, fb, target, model, params, table, index)
print(f"NPRF_ds score = sum of gated scores = {score:+.6f}")

feats = PairFeatures(fb, model, table, index)
fast, _ = model.forward(params, feats.inputs([target.doc_id]), feats.gate_matrix(1))
print(f"batched path                      = {fast[0]:+.6f}")
