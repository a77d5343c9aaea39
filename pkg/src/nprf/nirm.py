"""Neural document-to-document scorers: DRMM (LCH x IDF) and a K-NRM variant.

Both models are written against batched numpy inputs so one forward call
scores many (feedback document, target document) pairs with shared weights.
``forward`` returns the scores plus a cache; ``backward`` turns an upstream
gradient on the scores into gradients for every trainable parameter.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from nprf.embeddings import InteractionMatrix

LOG_EPS = 1e-10
KNRM_FEATURE_SCALE = 0.01
DRMM_BINS = 30
HIDDEN = 5
MODEL_MAGIC = "NPRFMDL1"

Params = dict[str, np.ndarray]


class DegenerateInputError(ValueError):
    """The interaction matrix has no rows or no columns."""


class StaleCacheError(RuntimeError):
    pass


def params_digest(params: Params) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name], dtype=np.float64).tobytes())
    return h.hexdigest()


def uniform_init(shapes: dict[str, tuple[tuple[int, ...], int, int]], rng: np.random.Generator) -> Params:
    """Draw each parameter from U(-r, r) with r = sqrt(6 / (fan_in + fan_out)).

    ``shapes`` maps name -> (shape, fan_in, fan_out). Names are drawn in
    sorted order so the result depends only on the generator state.
    """
    params = {}
    for name in sorted(shapes):
        shape, fan_in, fan_out = shapes[name]
        r = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-r, r, size=shape).astype(np.float64)
    return params


@dataclass
class ForwardCache:
    digest: str
    values: dict


def _check_cache(params: Params, cache: ForwardCache | None) -> dict:
    if cache is None:
        raise StaleCacheError("backward called without a forward cache")
    if cache.digest != params_digest(params):
        raise StaleCacheError("parameters changed since the forward pass")
    return cache.values


# ---------------------------------------------------------------------------
# DRMM
# ---------------------------------------------------------------------------


def histogram_bin_index(sims: np.ndarray, bins: int = DRMM_BINS) -> np.ndarray:
    """Bin index per similarity: ``bins - 1`` equal intervals over [-1, 1), plus
    a final exact-match bin for similarity 1.0."""
    sims = np.asarray(sims, dtype=np.float64)
    idx = np.floor((sims + 1.0) * 0.5 * (bins - 1)).astype(np.int64)
    np.clip(idx, 0, bins - 2, out=idx)
    idx[sims >= 1.0] = bins - 1
    return idx


def drmm_histogram(row: Sequence[float], bins: int = DRMM_BINS, counts=None) -> np.ndarray:
    """Log-count histogram ``ln(1 + count)`` of one similarity row.

    ``counts`` optionally gives a multiplicity per similarity value.
    """
    row = np.asarray(row, dtype=np.float64)
    if row.size == 0:
        return np.zeros(bins)
    raw = np.bincount(histogram_bin_index(row, bins), weights=counts, minlength=bins)
    return np.log1p(raw)


@dataclass
class DrmmInputs:
    """Batched DRMM input: ``hist`` (n, rows, bins), ``idf`` and ``mask`` (n, rows)."""

    hist: np.ndarray
    idf: np.ndarray
    mask: np.ndarray

    def __len__(self):
        return self.hist.shape[0]

    def take(self, idx) -> "DrmmInputs":
        return DrmmInputs(self.hist[idx], self.idf[idx], self.mask[idx])

    @staticmethod
    def stack(items: Sequence["DrmmInputs"]) -> "DrmmInputs":
        return DrmmInputs(
            np.concatenate([i.hist for i in items]),
            np.concatenate([i.idf for i in items]),
            np.concatenate([i.mask for i in items]),
        )

    @classmethod
    def from_matrix(cls, matrix: InteractionMatrix, idf_weights, bins: int = DRMM_BINS) -> "DrmmInputs":
        rows = matrix.values.shape[0]
        idf = np.asarray(idf_weights, dtype=np.float64).reshape(rows)
        if matrix.is_empty:
            return cls(np.zeros((1, max(rows, 1), bins)), np.zeros((1, max(rows, 1))),
                       np.zeros((1, max(rows, 1)), dtype=bool))
        hist = np.stack([drmm_histogram(r, bins) for r in matrix.values])
        return cls(hist[None], idf[None], np.ones((1, rows), dtype=bool))


class Drmm:
    """Histogram -> FFN [bins -> 5 -> 1] (tanh hidden, linear out) per row,
    combined with a softmax term gate over ``w_g * idf``."""

    name = "drmm"

    def __init__(self, bins: int = DRMM_BINS, hidden: int = HIDDEN):
        self.bins = bins
        self.hidden = hidden

    @property
    def descriptor(self) -> str:
        return f"bins={self.bins},hidden={self.hidden}"

    def shapes(self):
        b, h = self.bins, self.hidden
        return {
            "W1": ((b, h), b, h),
            "b1": ((h,), b, h),
            "w2": ((h,), h, 1),
            "b2": ((), h, 1),
            "wg": ((), 1, 1),
        }

    def init_params(self, rng: np.random.Generator) -> Params:
        return uniform_init(self.shapes(), rng)

    def forward(self, params: Params, inputs: DrmmInputs):
        hist, idf, mask = inputs.hist, inputs.idf, inputs.mask
        hidden = np.tanh(hist @ params["W1"] + params["b1"])
        z = hidden @ params["w2"] + params["b2"]
        logits = np.where(mask, params["wg"] * idf, -np.inf)
        valid = mask.any(axis=1)
        peak = np.where(valid, logits.max(axis=1, initial=-np.inf), 0.0)
        e = np.where(mask, np.exp(logits - peak[:, None]), 0.0)
        denom = e.sum(axis=1)
        gate = e / np.where(valid, denom, 1.0)[:, None]
        scores = np.where(valid, (gate * np.where(mask, z, 0.0)).sum(axis=1), 0.0)
        cache = ForwardCache(params_digest(params), dict(
            hist=hist, idf=idf, mask=mask, hidden=hidden, z=z, gate=gate, valid=valid))
        return scores, cache

    def backward(self, params: Params, cache: ForwardCache, upstream) -> Params:
        c = _check_cache(params, cache)
        n = c["hist"].shape[0]
        u = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (n,)) * c["valid"]
        gate, z, hidden, mask = c["gate"], np.where(c["mask"], c["z"], 0.0), c["hidden"], c["mask"]
        dz = u[:, None] * gate
        dgate = u[:, None] * z
        dlogit = gate * (dgate - (gate * dgate).sum(axis=1, keepdims=True))
        dlogit = np.where(mask, dlogit, 0.0)
        dpre = (dz[..., None] * params["w2"]) * (1.0 - hidden**2)
        return {
            "W1": np.einsum("nrb,nrh->bh", c["hist"], dpre),
            "b1": dpre.sum(axis=(0, 1)),
            "w2": np.einsum("nr,nrh->h", dz, hidden),
            "b2": np.asarray(dz.sum()),
            "wg": np.asarray((dlogit * c["idf"]).sum()),
        }


def drmm_score(matrix: InteractionMatrix, idf_weights, params: Params, model: Drmm | None = None) -> float:
    """DRMM relevance of one interaction matrix; 0.0 for an empty matrix."""
    model = model or Drmm(params["W1"].shape[0], params["W1"].shape[1])
    if matrix.is_empty:
        return 0.0
    scores, _ = model.forward(params, DrmmInputs.from_matrix(matrix, idf_weights, model.bins))
    return float(scores[0])


# ---------------------------------------------------------------------------
# K-NRM
# ---------------------------------------------------------------------------


def default_kernels() -> tuple[np.ndarray, np.ndarray]:
    """Exact-match kernel (mu=1, sigma=1e-3) then mu = -0.9, -0.7, ..., 0.9 with sigma=0.1."""
    mus = np.array([1.0] + [round(-0.9 + 0.2 * i, 1) for i in range(10)])
    sigmas = np.array([1e-3] + [0.1] * 10)
    return mus, sigmas


def kernel_sums(sims: np.ndarray, mus, sigmas, counts=None) -> np.ndarray:
    """Per-row soft-TF ``sum_cols exp(-(s - mu)^2 / (2 sigma^2))``; shape (..., rows, K)."""
    sims = np.asarray(sims, dtype=np.float64)[..., None]
    k = np.exp(-((sims - mus) ** 2) / (2.0 * sigmas**2))
    if counts is not None:
        k = k * np.asarray(counts, dtype=np.float64)[:, None]
    return k.sum(axis=-2)


def knrm_features(matrix: InteractionMatrix | np.ndarray, kernels=None) -> np.ndarray:
    """Kernel-pooled features ``phi_k = sum_rows ln(max(soft_tf_k, 1e-10))``."""
    values = matrix.values if isinstance(matrix, InteractionMatrix) else np.asarray(matrix, dtype=np.float64)
    if values.size == 0:
        raise DegenerateInputError("kernel pooling needs a non-empty interaction matrix")
    mus, sigmas = kernels if kernels is not None else default_kernels()
    soft_tf = kernel_sums(values, mus, sigmas)
    return np.log(np.maximum(soft_tf, LOG_EPS)).sum(axis=0)


@dataclass
class KnrmInputs:
    """Batched kernel features ``phi`` (n, K) and a validity flag per pair."""

    phi: np.ndarray
    valid: np.ndarray

    def __len__(self):
        return self.phi.shape[0]

    def take(self, idx) -> "KnrmInputs":
        return KnrmInputs(self.phi[idx], self.valid[idx])

    @staticmethod
    def stack(items: Sequence["KnrmInputs"]) -> "KnrmInputs":
        return KnrmInputs(np.concatenate([i.phi for i in items]), np.concatenate([i.valid for i in items]))

    @classmethod
    def from_matrix(cls, matrix: InteractionMatrix, kernels=None) -> "KnrmInputs":
        k = len((kernels or default_kernels())[0])
        if matrix.is_empty:
            return cls(np.zeros((1, k)), np.zeros(1, dtype=bool))
        return cls(knrm_features(matrix, kernels)[None], np.ones(1, dtype=bool))


class Knrm:
    """Frozen-embedding K-NRM: kernel features -> FC [K -> 5 -> 1], tanh on both layers.

    Features are multiplied by a fixed 0.01 before the first layer, as in the
    original K-NRM code, so that the ln(1e-10) floor does not saturate tanh.
    """

    name = "knrm"

    def __init__(self, kernels=None, hidden: int = HIDDEN):
        self.mus, self.sigmas = kernels if kernels is not None else default_kernels()
        if np.any(self.sigmas <= 0) or np.any(np.abs(self.mus) > 1):
            raise ValueError("kernel widths must be positive and means within [-1, 1]")
        self.hidden = hidden

    @property
    def kernels(self):
        return self.mus, self.sigmas

    @property
    def n_kernels(self) -> int:
        return len(self.mus)

    @property
    def descriptor(self) -> str:
        return f"kernels={self.n_kernels},hidden={self.hidden}"

    def shapes(self):
        k, h = self.n_kernels, self.hidden
        return {
            "W1": ((k, h), k, h),
            "b1": ((h,), k, h),
            "w2": ((h,), h, 1),
            "b2": ((), h, 1),
        }

    def init_params(self, rng: np.random.Generator) -> Params:
        return uniform_init(self.shapes(), rng)

    def forward(self, params: Params, inputs: KnrmInputs):
        x = inputs.phi * KNRM_FEATURE_SCALE
        hidden = np.tanh(x @ params["W1"] + params["b1"])
        out = np.tanh(hidden @ params["w2"] + params["b2"])
        scores = np.where(inputs.valid, out, 0.0)
        cache = ForwardCache(params_digest(params), dict(x=x, hidden=hidden, out=out, valid=inputs.valid))
        return scores, cache

    def backward(self, params: Params, cache: ForwardCache, upstream) -> Params:
        c = _check_cache(params, cache)
        n = c["x"].shape[0]
        u = np.broadcast_to(np.asarray(upstream, dtype=np.float64), (n,)) * c["valid"]
        dout = u * (1.0 - c["out"] ** 2)
        dpre = (dout[:, None] * params["w2"]) * (1.0 - c["hidden"] ** 2)
        return {
            "W1": c["x"].T @ dpre,
            "b1": dpre.sum(axis=0),
            "w2": dout @ c["hidden"],
            "b2": np.asarray(dout.sum()),
        }


def knrm_score(matrix: InteractionMatrix, params: Params, model: Knrm | None = None) -> float:
    """K-NRM relevance of one interaction matrix, in (-1, 1); 0.0 for an empty matrix."""
    model = model or Knrm(hidden=params["W1"].shape[1])
    if matrix.is_empty:
        return 0.0
    scores, _ = model.forward(params, KnrmInputs.from_matrix(matrix, model.kernels))
    return float(scores[0])


def make_scorer(name: str):
    if name == "drmm":
        return Drmm()
    if name == "knrm":
        return Knrm()
    raise ValueError(f"unknown scorer {name!r}; expected 'drmm' or 'knrm'")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_params(path: str | Path, model_name: str, descriptor: str, params: Params) -> None:
    """Write ``NPRFMDL1 <model> <shape>`` then ``name length`` / values line pairs.

    Values use ``repr`` so floats round-trip exactly.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MODEL_MAGIC} {model_name} {descriptor}\n")
        for name in sorted(params):
            flat = np.asarray(params[name], dtype=np.float64).ravel()
            fh.write(f"{name} {flat.size}\n")
            fh.write(" ".join(repr(float(v)) for v in flat) + "\n")


def load_params(path: str | Path, shapes: dict[str, tuple] | None = None):
    """Read a checkpoint. Returns ``(model_name, descriptor, params)``.

    With ``shapes`` given, each block is reshaped and checked against it.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3 or header[0] != MODEL_MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        params = {}
        while True:
            line = fh.readline()
            if not line:
                break
            if not line.strip():
                continue
            name, length = line.split()
            values = np.array([float(v) for v in fh.readline().split()], dtype=np.float64)
            if values.size != int(length):
                raise ValueError(f"{path}: block {name} declares {length} values, found {values.size}")
            params[name] = values
    if shapes is not None:
        if set(shapes) != set(params):
            raise ValueError(f"{path}: parameter blocks {sorted(params)} != expected {sorted(shapes)}")
        params = {n: params[n].reshape(shapes[n]) for n in params}
    return header[1], header[2], params
