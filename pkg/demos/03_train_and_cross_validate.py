"""Train NPRF_ds-DRMM with five-fold cross-validation and compare with BM25.

Uses a reduced synthetic collection and 10 epochs so it finishes in well
under a minute. Pass --full for the default 2,000-document task.

Run: python3 demos/03_train_and_cross_validate.py [--full]
"""

import sys
import time

from nprf.config import ExperimentConfig
from nprf.evaluation import evaluate, paired_t_test
from nprf.synthetic import SyntheticSpec, generate
from nprf.training import Experiment, cross_validate

full = "--full" in sys.argv
spec = SyntheticSpec() if full else SyntheticSpec(n_docs=600, n_queries=25)
config = ExperimentConfig(m=10, k=20, depth=100, epochs=30 if full else 10)

coll = generate(spec)
exp = Experiment(coll.index(), coll.embeddings(), coll.queries, coll.qrels)
baseline = evaluate(exp.baseline_runs(config.depth), exp.qrels)
print(f"{len(coll.documents)} documents, {len(coll.queries)} queries")
print(f"BM25        MAP {baseline.mean('map'):.4f}  P@20 {baseline.mean('P_20'):.4f}  "
      f"NDCG@20 {baseline.mean('ndcg_20'):.4f}")

start = time.perf_counter()
res = cross_validate(exp, config)
print(f"NPRF_ds     MAP {res.report.mean('map'):.4f}  P@20 {res.report.mean('P_20'):.4f}  "
      f"NDCG@20 {res.report.mean('ndcg_20'):.4f}   ({time.perf_counter() - start:.0f}s)")

for i, r in enumerate(res.results):
    print(f"  fold {i}: best epoch {r.best_epoch:2d}, loss {r.epoch_loss[0]:.3f} -> {r.epoch_loss[-1]:.3f}, "
          f"validation MAP {max(r.validation_map):.4f}")

qids = sorted(res.report.per_query)
t = paired_t_test(res.report.values("map", qids), baseline.values("map", qids))
print(f"paired t-test on MAP: t={t.t:.3f}, p={t.p:.4g}, significant at 95%: {t.significant_at_95}")
