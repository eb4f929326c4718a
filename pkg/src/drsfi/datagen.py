"""Deterministic synthetic data.

Dense features are i.i.d. standard Gaussian; sparse features are Bernoulli
per coordinate at the configured sparsity, stored as sorted index lists
(that is what the embedding lookup consumes). Labelled CTR sets carry a
planted linear signal so that learnability is guaranteed by construction.

All draws go through the Philox counter-based generator, so batches are
byte-identical for identical arguments and seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .seeding import mix, philox
from .tensor import Tensor

_SPLIT_SALT = 0x53504C49
_TAG_PLANTED = 1
_TAG_LABEL_NOISE = 2


@dataclass
class SyntheticBatch:
    """A batch of samples: dense matrix, per-sample sparse index lists, labels."""

    dense: Tensor
    sparse_indices: list[np.ndarray]
    labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.dense.shape[0]


@dataclass(frozen=True)
class PlantedSignal:
    """Hidden linear scorer the labels were generated from."""

    dense_weights: np.ndarray
    sparse_weights: np.ndarray

    def logits(self, batch: SyntheticBatch) -> np.ndarray:
        dense = batch.dense.array.astype(np.float64)
        out = dense @ self.dense_weights
        for i, idx in enumerate(batch.sparse_indices):
            out[i] += float(self.sparse_weights[idx].sum())
        return out


def gen_batch(
    n: int, dense_dim: int, sparse_dim: int, sparsity: float, seed: int
) -> SyntheticBatch:
    """Unlabelled batch: N(0,1) dense features, Bernoulli(sparsity) sparse."""
    if not 0.0 < sparsity < 1.0:
        raise ConfigError(f"sparsity must be in (0, 1), got {sparsity}")
    rng = philox(seed)
    dense = rng.standard_normal((n, dense_dim), dtype=np.float32)
    # count-then-subset draw: identical joint law to per-coordinate Bernoulli
    counts = rng.binomial(sparse_dim, sparsity, size=n)
    indices = []
    for c in counts:
        active = rng.choice(sparse_dim, size=int(c), replace=False)
        active.sort()
        indices.append(active.astype(np.int64))
    return SyntheticBatch(Tensor(dense), indices)


def planted_signal(cfg, sparsity: float, seed: int) -> PlantedSignal:
    """Reconstruct the hidden scorer gen_labeled uses for this seed.

    Weight scales are chosen so the dense and sparse contributions each have
    roughly unit variance across samples (hence the dependence on sparsity).
    """
    rng = philox(mix(seed, _TAG_PLANTED))
    scale = 1.5
    expected_active = max(cfg.sparse_dim * sparsity, 1.0)
    w = rng.standard_normal(cfg.dense_dim) * (scale / np.sqrt(cfg.dense_dim))
    u = rng.standard_normal(cfg.sparse_dim) * (scale / np.sqrt(expected_active))
    return PlantedSignal(w, u)


def gen_labeled(
    n: int, cfg, sparsity: float, noise: float, seed: int
) -> tuple[SyntheticBatch, PlantedSignal]:
    """Labelled CTR batch with a planted linear signal.

    label = [s + noise * eps > 0] with eps ~ Logistic(0, 1), i.e. labels are
    Bernoulli(sigmoid(s / noise)) for noise > 0 and deterministic thresholds
    at noise = 0, so the planted scorer's AUC is 1.0 in the noiseless case
    and degrades towards 0.5 as noise grows.
    """
    if noise < 0:
        raise ConfigError("label noise must be >= 0")
    batch = gen_batch(n, cfg.dense_dim, cfg.sparse_dim, sparsity, seed)
    planted = planted_signal(cfg, sparsity, seed)
    s = planted.logits(batch)
    eps = philox(mix(seed, _TAG_LABEL_NOISE)).logistic(size=n)
    batch.labels = ((s + noise * eps) > 0).astype(np.uint8)
    return batch, planted


def split_indices(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8:1:1 train/validation/test split by sample-index hash.

    Disjoint and exhaustive; independent of the data, stable across runs.
    """
    bucket = np.fromiter(
        (mix(_SPLIT_SALT, i) % 10 for i in range(n)), dtype=np.int64, count=n
    )
    return (
        np.nonzero(bucket < 8)[0],
        np.nonzero(bucket == 8)[0],
        np.nonzero(bucket == 9)[0],
    )


def subset(batch: SyntheticBatch, idx: np.ndarray) -> SyntheticBatch:
    """View of a batch restricted to the given sample indices."""
    return SyntheticBatch(
        Tensor(batch.dense.array[idx]),
        [batch.sparse_indices[i] for i in idx],
        None if batch.labels is None else batch.labels[idx],
    )


def export_batch(batch: SyntheticBatch, path) -> None:
    """One sample per line: label TAB dense floats TAB sparse indices.

    Dense values use shortest round-trip decimals; the label field is empty
    for unlabelled batches.
    """
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(batch.n):
            label = "" if batch.labels is None else str(int(batch.labels[i]))
            dense = ",".join(repr(float(v)) for v in batch.dense.array[i])
            idx = ",".join(str(int(v)) for v in batch.sparse_indices[i])
            fh.write(f"{label}\t{dense}\t{idx}\n")


def load_batch(path) -> SyntheticBatch:
    dense_rows: list[list[float]] = []
    indices: list[np.ndarray] = []
    labels: list[int] = []
    has_labels = True
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 tab-separated fields")
            label_s, dense_s, idx_s = fields
            if label_s == "":
                has_labels = False
            else:
                labels.append(int(label_s))
            dense_rows.append([float(v) for v in dense_s.split(",")] if dense_s else [])
            indices.append(
                np.asarray(
                    [int(v) for v in idx_s.split(",")] if idx_s else [], dtype=np.int64
                )
            )
    if not dense_rows:
        raise ConfigError(f"{path}: empty batch file")
    widths = {len(r) for r in dense_rows}
    if len(widths) != 1:
        raise DimensionError(f"{path}: inconsistent dense widths {sorted(widths)}")
    return SyntheticBatch(
        Tensor(np.asarray(dense_rows, dtype=np.float32)),
        indices,
        np.asarray(labels, dtype=np.uint8) if has_labels else None,
    )
