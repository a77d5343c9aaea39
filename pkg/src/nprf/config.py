"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

_PATH_KEYS = ("corpus", "index", "embeddings", "queries", "qrels", "stopwords", "output")


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str | None = None
    index: str | None = None
    embeddings: str | None = None
    queries: str | None = None
    qrels: str | None = None
    stopwords: str | None = None
    output: str = "out"

    m: int = 10
    k: int = 20
    depth: int = 1000
    pool_depth: int = 1000
    model: str = "drmm"
    variant: str = "ds"
    lr: float = 0.001
    batch_size: int = 20
    epochs: int = 30
    per_query: int = 16
    replacement: bool = True
    seed: int = 42
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    folds: int = 5
    max_doc_terms: int | None = None
    add_query_score: bool = False
    threads: int | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("m", "k", "depth", "pool_depth", "batch_size", "epochs", "per_query"):
            if getattr(self, name) < 1:
                raise ValueError(f"config: {name} must be >= 1")
        if self.model not in ("drmm", "knrm"):
            raise ValueError(f"config: unknown model {self.model!r}")
        if self.variant not in ("ds", "ff", "ff_prime"):
            raise ValueError(f"config: unknown variant {self.variant!r}")
        if self.lr < 0:
            raise ValueError("config: lr must be >= 0")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def check_paths(self, *keys: str) -> None:
        for key in keys:
            value = getattr(self, key)
            if value is None or not Path(value).exists():
                raise FileNotFoundError(f"config: {key} file {value!r} does not exist")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "threads":
                continue
            value = getattr(self, f.name)
            if value is None:
                continue
            key = f.name.replace("bm25_", "bm25.")
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    kind = types[name]
    if raw.lower() in ("none", "") and "None" in str(kind):
        return None
    if "bool" in str(kind):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config: {name} expects a boolean, got {raw!r}")
    if "int" in str(kind):
        return int(raw)
    if "float" in str(kind):
        return float(raw)
    return raw


def parse_config(text: str, base_dir: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Relative paths are resolved against ``base_dir`` when given.
    """
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        name = key.replace(".", "_")
        if name not in known:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        values[name] = _coerce(name, raw)
    if base_dir is not None:
        for key in _PATH_KEYS:
            if values.get(key) is not None and not Path(values[key]).is_absolute():
                values[key] = str(Path(base_dir) / values[key])
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text("utf-8"), base_dir=path.parent, **overrides)
