import json

import pytest

from nprf.cli import main
from nprf.config import ExperimentConfig, load_config, parse_config


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--docs", "300", "--queries", "10", "--seed", "5"]) == 0
    return out


def cv_args(synth_dir, out, *extra):
    return ["cv", "--config", str(synth_dir / "experiment.cfg"), "--output", str(out),
            "--depth", "30", "--epochs", "2", "--m", "4", "--k", "8", *extra]


def write_lines(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")


def test_index_reports_document_count(tmp_path, capsys):
    write_lines(tmp_path / "c.jsonl", [{"id": f"d{i}", "text": f"word{i} shared text"} for i in range(3)])
    assert main(["index", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "idx")]) == 0
    assert "N=3" in capsys.readouterr().out


def test_malformed_line_is_reported(tmp_path, capsys):
    (tmp_path / "c.jsonl").write_text('{"id": "a", "text": "x"}\n{"id": "b", "text": \n', encoding="utf-8")
    assert main(["index", "--corpus", str(tmp_path / "c.jsonl"), "--out", str(tmp_path / "idx")]) != 0
    assert ":2:" in capsys.readouterr().err


def test_index_rebuild_is_byte_identical(synth_dir, tmp_path):
    for name in ("a", "b"):
        assert main(["index", "--corpus", str(synth_dir / "corpus.jsonl"), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_search_and_eval(synth_dir, tmp_path, capsys):
    idx = tmp_path / "idx"
    main(["index", "--corpus", str(synth_dir / "corpus.jsonl"), "--out", str(idx)])
    for name, extra in (("bm25.run", []), ("qe.run", ["--expand"])):
        assert main(["search", "--index", str(idx), "--queries", str(synth_dir / "queries.jsonl"),
                     "--out", str(tmp_path / name), "--depth", "100", *extra]) == 0
    capsys.readouterr()
    assert main(["eval", "--qrels", str(synth_dir / "qrels.txt"), "--run", str(tmp_path / "qe.run"),
                 "--baseline", str(tmp_path / "bm25.run"), "--jsonl", str(tmp_path / "m.jsonl")]) == 0
    out = capsys.readouterr().out
    assert "10 queries evaluated" in out and "map: t=" in out
    rows = [json.loads(line) for line in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert rows[-1]["query_id"] == "all"


def test_eval_ideal_run(synth_dir, tmp_path, capsys):
    lines = []
    for line in (synth_dir / "qrels.txt").read_text().splitlines():
        qid, _, doc, grade = line.split()
        if int(grade) > 0:
            lines.append((qid, doc))
    run = "".join(f"{q} Q0 {d} {i + 1} {1000 - i} ideal\n" for i, (q, d) in enumerate(lines))
    (tmp_path / "ideal.run").write_text(run)
    assert main(["eval", "--qrels", str(synth_dir / "qrels.txt"), "--run", str(tmp_path / "ideal.run"),
                 "--jsonl", str(tmp_path / "m.jsonl")]) == 0
    summary = json.loads((tmp_path / "m.jsonl").read_text().splitlines()[-1])
    assert summary["ndcg_20"] == pytest.approx(1.0) and summary["map"] == pytest.approx(1.0)


def test_cv_is_reproducible(synth_dir, tmp_path):
    for name in ("a", "b"):
        assert main(cv_args(synth_dir, tmp_path / name)) == 0
    ma = json.loads((tmp_path / "a" / "manifest.cv.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.cv.json").read_text())
    ma["files"].pop("config.used"), mb["files"].pop("config.used")
    assert ma["files"] == mb["files"]
    assert any(f.endswith(".ckpt") for f in ma["files"])
    assert ma["seed"] == load_config(synth_dir / "experiment.cfg").seed == 5


def test_manifest_hashes_match_files(synth_dir, tmp_path):
    import hashlib

    out = tmp_path / "o"
    assert main(cv_args(synth_dir, out)) == 0
    manifest = json.loads((out / "manifest.cv.json").read_text())
    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_sweep_rows_and_singleton_matches_cv(synth_dir, tmp_path):
    assert main(["sweep", *cv_args(synth_dir, tmp_path / "s")[1:], "--param", "m", "--values", "2,4"]) == 0
    rows = (tmp_path / "s" / "sweep.m.jsonl").read_text().splitlines()
    assert len(rows) == 2
    assert main(cv_args(synth_dir, tmp_path / "c")) == 0
    cv_run = next((tmp_path / "c").glob("*.run")).name
    sweep_run = cv_run.replace(".run", ".m4.run")
    assert (tmp_path / "s" / sweep_run).read_bytes() == (tmp_path / "c" / cv_run).read_bytes()


def test_train_then_rerank(synth_dir, tmp_path):
    cfg = ["--config", str(synth_dir / "experiment.cfg"), "--output", str(tmp_path),
           "--depth", "30", "--epochs", "2", "--m", "4", "--k", "8"]
    assert main(["train", *cfg, "--fold", "1"]) == 0
    ckpt = next(tmp_path.glob("*.ckpt"))
    assert main(["rerank", *cfg, "--checkpoint", str(ckpt), "--fold", "1"]) == 0
    lines = (tmp_path / "rerank.run").read_text().splitlines()
    assert len({line.split()[0] for line in lines}) == 2
    assert 0 < len(lines) <= 2 * 30


def test_missing_input_fails_cleanly(tmp_path, capsys):
    (tmp_path / "x.cfg").write_text("embeddings = nope.txt\nqueries = q\nqrels = r\n")
    assert main(["cv", "--config", str(tmp_path / "x.cfg"), "--output", str(tmp_path / "o")]) == 1
    assert "does not exist" in capsys.readouterr().err


class TestConfig:
    def test_parse(self, tmp_path):
        cfg = parse_config("m = 5  # feedback docs\nbm25.k1 = 0.9\nadd_query_score = yes\ncorpus = c.jsonl\n",
                           base_dir=tmp_path)
        assert (cfg.m, cfg.bm25_k1, cfg.add_query_score) == (5, 0.9, True)
        assert cfg.corpus == str(tmp_path / "c.jsonl")

    def test_overrides_win(self):
        assert parse_config("m = 5\n", m=3).m == 3

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_config("nonsense = 1\n")

    def test_invalid_value(self):
        with pytest.raises(ValueError):
            parse_config("variant = mystery\n")

    def test_text_round_trip(self):
        cfg = ExperimentConfig(m=3, k=7, model="knrm", bm25_b=0.4, corpus="/c")
        assert parse_config(cfg.to_text()) == cfg
        assert cfg.digest() == parse_config(cfg.to_text()).digest()


@pytest.mark.parametrize("extra,rows", [([], 80), (["--expand"], 9)])
def test_bm25_grid(synth_dir, tmp_path, capsys, extra, rows):
    idx = tmp_path / "idx"
    main(["index", "--corpus", str(synth_dir / "corpus.jsonl"), "--out", str(idx)])
    capsys.readouterr()
    assert main(["bm25-grid", "--index", str(idx), "--queries", str(synth_dir / "queries.jsonl"),
                 "--qrels", str(synth_dir / "qrels.txt"), "--depth", "50", *extra]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == rows + 1 and lines[-1].startswith("best ")
