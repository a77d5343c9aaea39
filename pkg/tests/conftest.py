import numpy as np
import pytest

from nprf.corpus import Document, build_index
from nprf.embeddings import EmbeddingTable


@pytest.fixture
def toy_index():
    docs = [
        Document("d1", ("a", "b", "a", "c")),
        Document("d2", ("b", "c", "c")),
        Document("d3", ("a", "d", "e", "e", "e")),
    ]
    return build_index(docs)


def random_docs(rng, n_docs=100, vocab=30, max_len=25):
    words = [f"w{i}" for i in range(vocab)]
    docs = []
    for i in range(n_docs):
        n = int(rng.integers(1, max_len))
        docs.append(Document(f"doc{i:03d}", tuple(words[j] for j in rng.integers(vocab, size=n))))
    return docs, words


@pytest.fixture
def random_corpus():
    rng = np.random.default_rng(1234)
    docs, words = random_docs(rng)
    return docs, words, build_index(docs)


def make_table(tokens, dim=8, seed=0):
    rng = np.random.default_rng(seed)
    return EmbeddingTable(list(tokens), rng.standard_normal((len(tokens), dim)))


@pytest.fixture(scope="session")
def small_world():
    """A 200-document synthetic collection with its index, embeddings and BM25 runs."""
    from nprf.synthetic import SyntheticSpec, generate
    from nprf.training import Experiment

    coll = generate(SyntheticSpec(n_docs=200, n_topics=5, words_per_topic=40, background_words=100,
                                  n_queries=10, dim=16, seed=3))
    exp = Experiment(coll.index(), coll.embeddings(), coll.queries, coll.qrels, pool_depth=200)
    return coll, exp


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and echo it immediately."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(criterion: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
        lines.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
