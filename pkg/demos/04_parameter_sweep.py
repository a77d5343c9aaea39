"""How sensitive is NPRF_ds to the number of feedback documents m?

Re-runs cross-validation for a few values of m on a reduced synthetic task.
The CLI equivalent is ``nprf sweep --param m --values 1,3,5,10``.

Run: python3 demos/04_parameter_sweep.py
"""

from nprf.config import ExperimentConfig
from nprf.synthetic import SyntheticSpec, generate
from nprf.training import Experiment, cross_validate, mean_ap

coll = generate(SyntheticSpec(n_docs=600, n_queries=25))
exp = Experiment(coll.index(), coll.embeddings(), coll.queries, coll.qrels)
base = ExperimentConfig(k=20, depth=100, epochs=8)

print(f"BM25 MAP {mean_ap(exp.baseline_runs(base.depth), exp.qrels):.4f}")
for m in (1, 3, 5, 10):
    res = cross_validate(exp, base.with_(m=m))
    print(f"m={m:<3} NPRF_ds-DRMM MAP {res.report.mean('map'):.4f}")
