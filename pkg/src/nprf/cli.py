"""Command-line entry point: ``nprf <command> [options]``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from nprf.config import ExperimentConfig, load_config
from nprf.core import NprfModel, build_feedback_set, write_feedback
from nprf.corpus import CorpusIndex, build_index, load_stopwords, read_corpus
from nprf.embeddings import load_embeddings
from nprf.evaluation import METRICS, Qrels, evaluate, paired_t_test
from nprf.first_stage import (
    Bm25Params,
    bm25_grid,
    bm25_search,
    read_queries,
    read_run,
    rocchio_expand,
    write_run,
)
from nprf.training import Experiment, cross_validate, make_folds, rerank_queries, train

log = logging.getLogger("nprf")

QE_GRID = [(d, t) for d in (5, 10, 20) for t in (10, 20, 50)]


class Outputs:
    """Tracks files written by a command; removes them on failure, writes a manifest on success."""

    def __init__(self, out_dir: str | Path, command: str, config: ExperimentConfig | None = None):
        self.dir = Path(out_dir)
        self.command = command
        self.config = config
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def __enter__(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.files:
                p.unlink(missing_ok=True)
            return False
        manifest = {
            "command": self.command,
            "config_sha256": self.config.digest() if self.config else None,
            "seed": self.config.seed if self.config else None,
            "files": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.files if p.exists()},
        }
        if self.config is not None:
            (self.dir / "config.used").write_text(self.config.to_text(), encoding="utf-8")
            manifest["files"]["config.used"] = hashlib.sha256((self.dir / "config.used").read_bytes()).hexdigest()
        (self.dir / f"manifest.{self.command}.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return False


def _index_for(cfg: ExperimentConfig, stopwords) -> CorpusIndex:
    if cfg.index and Path(cfg.index).exists():
        return CorpusIndex.load(cfg.index)
    cfg.check_paths("corpus")
    return build_index(read_corpus(cfg.corpus, stopwords))


def _experiment(cfg: ExperimentConfig) -> Experiment:
    cfg.check_paths("embeddings", "queries", "qrels")
    stop = load_stopwords(cfg.stopwords)
    index = _index_for(cfg, stop)
    table = load_embeddings(cfg.embeddings)
    queries = read_queries(cfg.queries, stop)
    qrels = Qrels.read(cfg.qrels)
    return Experiment(index, table, queries, qrels, Bm25Params(cfg.bm25_k1, cfg.bm25_b), cfg.pool_depth)


def _config(args) -> ExperimentConfig:
    overrides = {}
    for key in ("m", "k", "depth", "model", "variant", "seed", "epochs", "output"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "threads", None):
        overrides["threads"] = args.threads
    return load_config(args.config, **overrides)


def _fmt_means(report) -> str:
    return "  ".join(f"{m}={report.mean(m):.4f}" for m in METRICS)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_index(args) -> int:
    stop = load_stopwords(args.stopwords)
    index = build_index(read_corpus(args.corpus, stop))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    index.save(args.out)
    print(f"N={index.doc_count} vocabulary={len(index.vocabulary)} avg_doc_len={index.avg_doc_len:.4f}")
    return 0


def cmd_search(args) -> int:
    stop = load_stopwords(args.stopwords)
    index = CorpusIndex.load(args.index)
    params = Bm25Params(args.k1, args.b)
    runs = []
    for q in read_queries(args.queries, stop):
        run = bm25_search(q, index, params, args.depth)
        if args.expand and len(run):
            expanded = rocchio_expand(q, run, index, min(args.fb_docs, len(run)), args.fb_terms, args.beta)
            run = bm25_search(expanded, index, params, args.depth)
        runs.append(run)
    write_run(args.out, runs, "bm25+qe" if args.expand else "bm25")
    print(f"wrote {len(runs)} queries to {args.out}")
    return 0


def cmd_bm25_grid(args) -> int:
    stop = load_stopwords(args.stopwords)
    index = CorpusIndex.load(args.index)
    queries = read_queries(args.queries, stop)
    qrels = Qrels.read(args.qrels)
    best = None
    if args.expand:
        params = Bm25Params(args.k1, args.b)
        first = {q.query_id: bm25_search(q, index, params, args.depth) for q in queries}
        for fb_docs, fb_terms in QE_GRID:
            runs = []
            for q in queries:
                run = first[q.query_id]
                if len(run):
                    run = bm25_search(rocchio_expand(q, run, index, min(fb_docs, len(run)), fb_terms, args.beta),
                                      index, params, args.depth)
                runs.append(run)
            score = evaluate(runs, qrels).mean("map")
            print(f"fb_docs={fb_docs} fb_terms={fb_terms} MAP={score:.4f}")
            if best is None or score > best[0]:
                best = (score, f"fb_docs={fb_docs} fb_terms={fb_terms}")
    else:
        for params in bm25_grid():
            runs = [bm25_search(q, index, params, args.depth) for q in queries]
            score = evaluate(runs, qrels).mean("map")
            print(f"k1={params.k1:.1f} b={params.b:.1f} MAP={score:.4f}")
            if best is None or score > best[0]:
                best = (score, f"k1={params.k1:.1f} b={params.b:.1f}")
    print(f"best {best[1]} MAP={best[0]:.4f}")
    return 0


def cmd_build_feedback(args) -> int:
    stop = load_stopwords(args.stopwords)
    index = CorpusIndex.load(args.index)
    runs = read_run(args.run)
    sets = []
    for q in read_queries(args.queries, stop):
        if q.query_id in runs:
            sets.append(build_feedback_set(q, runs[q.query_id], index, args.m, args.k))
    write_feedback(args.out, sets)
    print(f"wrote {len(sets)} feedback sets to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    exp = _experiment(cfg)
    fold = make_folds(exp.query_ids, cfg.seed, cfg.folds)[args.fold]
    with Outputs(cfg.output, f"train-fold{args.fold}", cfg) as out:
        res = train(exp, fold, cfg, fold_no=args.fold)
        res.model.save(out.path(f"{res.model.name}.fold{args.fold}.ckpt"), res.params)
        with open(out.path(f"train.fold{args.fold}.jsonl"), "w", encoding="utf-8") as fh:
            for epoch, (loss, vmap) in enumerate(zip(res.epoch_loss, res.validation_map), start=1):
                fh.write(json.dumps({"epoch": epoch, "loss": loss, "validation_map": vmap}) + "\n")
    print(f"fold {args.fold}: best epoch {res.best_epoch}, validation MAP {max(res.validation_map):.4f}")
    return 0


def cmd_rerank(args) -> int:
    cfg = _config(args)
    exp = _experiment(cfg)
    model, params = NprfModel.load(args.checkpoint)
    qids = exp.query_ids
    if args.fold is not None:
        qids = list(make_folds(qids, cfg.seed, cfg.folds)[args.fold].test)
    with Outputs(cfg.output, "rerank", cfg) as out:
        runs = rerank_queries(model, params, exp, qids, cfg.k, cfg.depth, cfg.max_doc_terms, cfg.add_query_score)
        write_run(out.path(args.out), [runs[q] for q in sorted(runs)], model.name)
    print(f"re-ranked {len(runs)} queries with {model.name}")
    return 0


def cmd_eval(args) -> int:
    qrels = Qrels.read(args.qrels)
    runs = read_run(args.run)
    report = evaluate(runs, qrels)
    name = Path(args.run).name
    print(report.table(name), end="")
    if args.jsonl:
        Path(args.jsonl).write_text(report.jsonl(name), encoding="utf-8")
    if args.baseline:
        base = evaluate(read_run(args.baseline), qrels)
        shared = sorted(set(base.per_query) & set(report.per_query))
        for metric in METRICS:
            res = paired_t_test(report.values(metric, shared), base.values(metric, shared))
            mark = "significant" if res.significant_at_95 else "not significant"
            print(f"{metric}: t={res.t:.4f} p={res.p:.6f} ({mark} at 95%)")
    return 0


def _cv_outputs(out: Outputs, exp: Experiment, cfg: ExperimentConfig, tag: str = ""):
    res = cross_validate(exp, cfg)
    model_name = res.results[0].model.name
    baseline = evaluate(exp.baseline_runs(cfg.depth), exp.qrels)
    write_run(out.path(f"{model_name}{tag}.run"), [res.runs[q] for q in sorted(res.runs)], model_name)
    write_run(out.path(f"bm25{tag}.run"), [exp.baseline_runs(cfg.depth)[q] for q in sorted(res.runs)], "bm25")
    out.path(f"{model_name}{tag}.metrics.txt").write_text(res.report.table(model_name), encoding="utf-8")
    out.path(f"{model_name}{tag}.metrics.jsonl").write_text(
        res.report.jsonl(model_name) + baseline.jsonl("bm25"), encoding="utf-8")
    with open(out.path(f"{model_name}{tag}.folds.jsonl"), "w", encoding="utf-8") as fh:
        for i, (fold, r) in enumerate(zip(res.folds, res.results)):
            fh.write(json.dumps({"fold": i, "test": list(fold.test), "best_epoch": r.best_epoch,
                                 "epoch_loss": r.epoch_loss, "validation_map": r.validation_map}) + "\n")
    for i, r in enumerate(res.results):
        r.model.save(out.path(f"{model_name}{tag}.fold{i}.ckpt"), r.params)
    return res, baseline


def cmd_cv(args) -> int:
    cfg = _config(args)
    exp = _experiment(cfg)
    with Outputs(cfg.output, "cv", cfg) as out:
        res, baseline = _cv_outputs(out, exp, cfg)
    shared = sorted(res.report.per_query)
    print(f"bm25          {_fmt_means(baseline)}")
    print(f"{res.results[0].model.name:<14}{_fmt_means(res.report)}")
    for metric in METRICS:
        t = paired_t_test(res.report.values(metric, shared), baseline.values(metric, shared))
        print(f"  {metric}: t={t.t:.3f} p={t.p:.5f}{' *' if t.significant_at_95 else ''}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    values = [int(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("sweep needs at least one value")
    exp = _experiment(cfg)
    rows = []
    with Outputs(cfg.output, f"sweep-{args.param}", cfg) as out:
        baseline = evaluate(exp.baseline_runs(cfg.depth), exp.qrels)
        for v in values:
            run_cfg = cfg.with_(**{args.param: v})
            res, _ = _cv_outputs(out, exp, run_cfg, tag=f".{args.param}{v}")
            rows.append({"param": args.param, "value": v, **res.report.means,
                         "bm25_map": baseline.mean("map")})
            exp.clear_cache()
        lines = [f"{args.param:>6}" + "".join(f"{m:>10}" for m in METRICS) + f"{'bm25_map':>10}"]
        lines += [f"{r['value']:>6}" + "".join(f"{r[m]:>10.4f}" for m in METRICS) + f"{r['bm25_map']:>10.4f}"
                  for r in rows]
        table = "\n".join(lines) + "\n"
        out.path(f"sweep.{args.param}.txt").write_text(table, encoding="utf-8")
        out.path(f"sweep.{args.param}.jsonl").write_text(
            "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows), encoding="utf-8")
    print(table, end="")
    return 0


def cmd_synth(args) -> int:
    from nprf.synthetic import SyntheticSpec, generate

    spec = SyntheticSpec(seed=args.seed, n_docs=args.docs, n_queries=args.queries)
    paths = generate(spec).write(args.out)
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nprf", description="Neural pseudo relevance feedback toolkit.")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for feature precomputation (default: all cores); results do not depend on it")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def stopwords_arg(p):
        p.add_argument("--stopwords", help="stopword file, one word per line (default: bundled English list)")

    p = sub.add_parser("index", help="build and persist the inverted index")
    p.add_argument("--corpus", required=True, help="JSON-lines corpus with 'id' and 'text'")
    p.add_argument("--out", required=True, help="index file to write")
    stopwords_arg(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="BM25 (optionally with Rocchio expansion) first-stage runs")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True, help="JSON-lines queries with 'id' and 'text'")
    p.add_argument("--out", required=True, help="TREC run file to write")
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--expand", action="store_true", help="BM25+QE: expand from the first-pass run")
    p.add_argument("--fb-docs", type=int, default=10)
    p.add_argument("--fb-terms", type=int, default=20)
    p.add_argument("--beta", type=float, default=0.4)
    stopwords_arg(p)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("bm25-grid", help="grid-search BM25 k1 (0.6..2.0) and b (0.1..1.0) by MAP")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--depth", type=int, default=1000)
    p.add_argument("--expand", action="store_true",
                   help="instead grid-search BM25+QE fb_docs (5,10,20) x fb_terms (10,20,50) at fixed k1, b")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--beta", type=float, default=0.4)
    stopwords_arg(p)
    p.set_defaults(func=cmd_bm25_grid)

    p = sub.add_parser("build-feedback", help="write top-m feedback sets with top-k tf-idf summaries")
    p.add_argument("--index", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run", required=True, help="initial TREC run")
    p.add_argument("--out", required=True, help="JSON-lines feedback file")
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--k", type=int, default=20)
    stopwords_arg(p)
    p.set_defaults(func=cmd_build_feedback)

    def config_args(p):
        p.add_argument("--config", required=True, help="key = value experiment config")
        p.add_argument("--output", help="override the output directory")
        p.add_argument("--m", type=int, help="override feedback documents m")
        p.add_argument("--k", type=int, help="override summary terms k")
        p.add_argument("--depth", type=int, help="override re-ranking depth")
        p.add_argument("--model", choices=["drmm", "knrm"], help="override the embedded scorer")
        p.add_argument("--variant", choices=["ds", "ff", "ff_prime"], help="override the combination variant")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--epochs", type=int, help="override the epoch cap")

    p = sub.add_parser("train", help="train on one cross-validation fold and keep the best-validation checkpoint")
    config_args(p)
    p.add_argument("--fold", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rerank", help="re-rank first-stage results with a trained checkpoint")
    config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--fold", type=int, help="only re-rank this fold's test queries")
    p.add_argument("--out", default="rerank.run", help="run file name inside the output directory")
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="MAP / P@20 / NDCG@20 of a run, optionally t-tested against a baseline")
    p.add_argument("--qrels", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--baseline", help="second run for a two-tailed paired t-test")
    p.add_argument("--jsonl", help="also write per-query rows as JSON lines")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="five-fold cross-validated NPRF experiment")
    config_args(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="cross-validate once per value of m or k")
    config_args(p)
    p.add_argument("--param", choices=["m", "k"], required=True)
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 3,5,10")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write the synthetic topical collection used for testing")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--docs", type=int, default=2000, help="number of documents")
    p.add_argument("--queries", type=int, default=50, help="number of queries")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None:
        args.threads = os.cpu_count() or 1
    try:
        return args.func(args)
    except (OSError, ValueError, ArithmeticError) as exc:
        print(f"nprf {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
