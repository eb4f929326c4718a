"""DRS-style models: a dense-feature MLP, an embedding table for sparse
features, and a predictor MLP over their concatenation.

Two flavours share the topology: the untrained "dummy" model used for RMSE
deviation studies (raw 1-wide output) and a trainable CTR model (sigmoid
head, optional factorization-machine term on the logit). Forward passes are
pure functions of (parameters, input); batched and single-sample execution
are bit-identical because the GEMM accumulation order is pinned.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .datagen import SyntheticBatch, split_indices, subset
from .errors import CheckpointError, DimensionError, TrainingError
from .metrics import auc_roc
from .mitigate import (
    AbftStatus,
    MitigationPolicy,
    abft_embedding,
    abft_gemm,
    augment_checksums,
    clip_activation_array,
)
from .seeding import mix, philox
from .tensor import Tensor, relu, sigmoid

_quiet = {"over": "ignore", "invalid": "ignore", "under": "ignore", "divide": "ignore"}

COMPONENT_MLP = "mlp"
COMPONENT_EMBEDDING = "embedding"

HEAD_RAW = "raw"
HEAD_SIGMOID = "sigmoid"


@dataclass(frozen=True)
class DummyModelConfig:
    """Model dimensions; defaults follow the reference design grid."""

    mlp_depth: int = 1
    mlp_hidden: int = 128
    embed_dim: int = 128
    dense_dim: int = 128
    sparse_dim: int = 8192

    def __post_init__(self):
        for name in ("mlp_depth", "mlp_hidden", "embed_dim", "dense_dim", "sparse_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 256
    patience: int = 3
    seed: int = 0


@dataclass(frozen=True)
class ModelStructure:
    config: DummyModelConfig
    dense_stack: tuple[tuple[str, str], ...]
    table: str
    predictor_stack: tuple[tuple[str, str], ...]
    head: str = HEAD_RAW
    use_fm: bool = False


class ModelGraph:
    """Named parameter tensors plus the layer sequence that consumes them.

    Every parameter carries exactly one component tag (mlp or embedding);
    injection target selectors resolve against those tags.
    """

    def __init__(self, parameters, component, structure: ModelStructure | None = None):
        self.parameters: dict[str, Tensor] = dict(parameters)
        self.component: dict[str, str] = dict(component)
        if set(self.parameters) != set(self.component):
            raise ValueError("every parameter needs exactly one component tag")
        self.structure = structure

    @property
    def layers(self) -> list[tuple]:
        """Ordered layer descriptors (op name plus the parameters it reads)."""
        s = self.structure
        if s is None:
            return []
        out: list[tuple] = []
        for w, b in s.dense_stack:
            out.append(("affine", w, b))
            out.append(("activation",))
        out.append(("embedding_bag", s.table))
        out.append(("concat",))
        for i, (w, b) in enumerate(s.predictor_stack):
            out.append(("affine", w, b))
            if i + 1 < len(s.predictor_stack):
                out.append(("activation",))
        if s.use_fm:
            out.append(("fm_interaction", s.table))
        if s.head == HEAD_SIGMOID:
            out.append(("sigmoid",))
        return out

    def total_parameters(self) -> int:
        return sum(t.size for t in self.parameters.values())

    def crc32(self) -> int:
        """Checksum of all parameter words, for golden-state verification."""
        crc = 0
        for t in self.parameters.values():
            crc = zlib.crc32(t.words().tobytes(), crc)
        return crc

    def copy(self) -> "ModelGraph":
        return ModelGraph(
            {n: t.copy() for n, t in self.parameters.items()},
            self.component,
            self.structure,
        )


def param_count(cfg: DummyModelConfig) -> int:
    """Closed-form parameter count of the topology built below."""
    d, h, e, dd, v = (
        cfg.mlp_depth,
        cfg.mlp_hidden,
        cfg.embed_dim,
        cfg.dense_dim,
        cfg.sparse_dim,
    )
    dense = (dd * h + h) + (d - 1) * (h * h + h) + (h * e + e)
    pred = (2 * e * h + h) + (h + 1)
    return dense + v * e + pred


def _kaiming_uniform(rng, fan_in: int, shape) -> np.ndarray:
    bound = np.float32(np.sqrt(6.0 / fan_in))
    return (rng.random(shape, dtype=np.float32) * np.float32(2.0) - np.float32(1.0)) * bound


def _build(cfg: DummyModelConfig, seed: int, head: str, use_fm: bool) -> ModelGraph:
    rng = philox(seed)
    params: dict[str, Tensor] = {}
    tags: dict[str, str] = {}

    def affine(prefix, i, fan_in, fan_out):
        w, b = f"{prefix}.{i}.weight", f"{prefix}.{i}.bias"
        params[w] = Tensor(_kaiming_uniform(rng, fan_in, (fan_in, fan_out)))
        params[b] = Tensor(np.zeros(fan_out, dtype=np.float32))
        tags[w] = tags[b] = COMPONENT_MLP
        return w, b

    dense_dims = [cfg.dense_dim] + [cfg.mlp_hidden] * cfg.mlp_depth + [cfg.embed_dim]
    dense_stack = tuple(
        affine("dense_mlp", i, dense_dims[i], dense_dims[i + 1])
        for i in range(len(dense_dims) - 1)
    )
    table = "embedding.table"
    # per-row fan-in is the embedding width
    params[table] = Tensor(
        _kaiming_uniform(rng, cfg.embed_dim, (cfg.sparse_dim, cfg.embed_dim))
    )
    tags[table] = COMPONENT_EMBEDDING
    pred_dims = [2 * cfg.embed_dim, cfg.mlp_hidden, 1]
    predictor_stack = tuple(
        affine("predictor", i, pred_dims[i], pred_dims[i + 1])
        for i in range(len(pred_dims) - 1)
    )
    structure = ModelStructure(cfg, dense_stack, table, predictor_stack, head, use_fm)
    return ModelGraph(params, tags, structure)


def build_dummy(cfg: DummyModelConfig, seed: int) -> ModelGraph:
    """Untrained model: Kaiming-uniform weights, zero biases, raw output."""
    return _build(cfg, seed, HEAD_RAW, use_fm=False)


def build_ctr(cfg: DummyModelConfig, use_fm: bool, seed: int) -> ModelGraph:
    """Trainable CTR model: dummy topology plus sigmoid head (and FM term)."""
    return _build(cfg, seed, HEAD_SIGMOID, use_fm)


class AbftContext:
    """Golden checksum columns plus counters for a checked forward pass."""

    def __init__(self, model: ModelGraph, policy: MitigationPolicy):
        self.policy = policy
        self.checksums: dict[str, np.ndarray] = {}
        s = model.structure
        for w, _ in s.dense_stack + s.predictor_stack:
            self.checksums[w] = augment_checksums(model.parameters[w]).array[:, -1].copy()
        self.checksums[s.table] = (
            augment_checksums(model.parameters[s.table]).array[:, -1].copy()
        )
        self.ops = 0
        self.detected = 0
        self.unrecoverable = 0

    def reset_counters(self) -> None:
        self.ops = self.detected = self.unrecoverable = 0

    def record(self, status: AbftStatus) -> None:
        self.ops += 1
        self.detected += int(status.detected)
        self.unrecoverable += int(status.unrecoverable)


def _aug(values: np.ndarray, checksum: np.ndarray) -> Tensor:
    out = np.empty((values.shape[0], values.shape[1] + 1), dtype=np.float32)
    out[:, :-1] = values
    out[:, -1] = checksum
    return Tensor(out)


def _affine(x, model, wname, bname, abft_ctx):
    w = model.parameters[wname].array
    b = model.parameters[bname].array
    if abft_ctx is None:
        out = _kernels.gemm_f32(x, w)
    else:
        c, status = abft_gemm(
            Tensor(x), _aug(w, abft_ctx.checksums[wname]), abft_ctx.policy
        )
        abft_ctx.record(status)
        out = c.array
    with np.errstate(**_quiet):
        return out + b


def _activation(x, clip_policy):
    if clip_policy is None:
        return relu(x)
    return clip_activation_array(x, clip_policy)


def forward_batch(
    model: ModelGraph,
    dense: np.ndarray | Tensor,
    sparse_indices: list[np.ndarray],
    clip_policy: MitigationPolicy | None = None,
    abft_ctx: AbftContext | None = None,
) -> np.ndarray:
    """Scalar model output per sample (logit, or probability for sigmoid head).

    Non-finite values propagate; they are data, not errors. When a clip
    policy is given it replaces ReLU at every hidden activation.
    """
    s = model.structure
    if s is None:
        raise ValueError("model has no layer structure (parameters-only graph)")
    x = dense.array if isinstance(dense, Tensor) else np.asarray(dense, dtype=np.float32)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != s.config.dense_dim:
        raise DimensionError(
            f"dense input width {x.shape[1]} != {s.config.dense_dim}"
        )
    if x.shape[0] != len(sparse_indices):
        raise DimensionError("dense rows and sparse index lists differ in count")

    for w, b in s.dense_stack:
        x = _activation(_affine(x, model, w, b, abft_ctx), clip_policy)

    table = model.parameters[s.table]
    pooled = np.empty((x.shape[0], s.config.embed_dim), dtype=np.float32)
    if abft_ctx is None:
        for i, idx in enumerate(sparse_indices):
            idx = np.asarray(idx, dtype=np.int64)
            if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
                raise IndexError("sparse index out of range")
            pooled[i] = _kernels.bag_f32(table.array, idx)
    else:
        table_aug = _aug(table.array, abft_ctx.checksums[s.table])
        for i, idx in enumerate(sparse_indices):
            r, status = abft_embedding(
                table_aug, np.asarray(idx, dtype=np.int64), abft_ctx.policy
            )
            abft_ctx.record(status)
            pooled[i] = r.array

    z = np.concatenate([x, pooled], axis=1)
    last = len(s.predictor_stack) - 1
    for i, (w, b) in enumerate(s.predictor_stack):
        z = _affine(z, model, w, b, abft_ctx)
        if i < last:
            z = _activation(z, clip_policy)
    out = z[:, 0]

    if s.use_fm:
        fm = np.array(
            [_fm_term(table.array, idx) for idx in sparse_indices], dtype=np.float32
        )
        with np.errstate(**_quiet):
            out = out + fm
    if s.head == HEAD_SIGMOID:
        out = sigmoid(out)
    return out


def _fm_term(table: np.ndarray, idx) -> float:
    """Pairwise-interaction term over the active embedding rows.

    Same squared-sum identity (and float64 accumulation) as
    tensor.fm_interaction, vectorised for the forward pass.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size < 2:
        return 0.0
    rows = table[idx].astype(np.float64)
    total = rows.sum(axis=0)
    return 0.5 * (float(np.dot(total, total)) - float(np.einsum("ij,ij->", rows, rows)))


def forward_dummy(model: ModelGraph, dense: Tensor, sparse_indices) -> Tensor:
    """Raw output vector for one sample."""
    if dense.rank != 1:
        raise DimensionError("single-sample forward expects a rank-1 dense input")
    out = forward_batch(model, dense.array.reshape(1, -1), [sparse_indices])
    return Tensor(out)


# --- training -------------------------------------------------------------


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return _kernels.gemm_f32(
        np.ascontiguousarray(a, dtype=np.float32),
        np.ascontiguousarray(b, dtype=np.float32),
    )


def bce_loss_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy, reduced in float64 for numerical headroom."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    with np.errstate(**_quiet):
        return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def loss_and_gradients(
    model: ModelGraph, batch: SyntheticBatch
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean BCE over the batch and analytic gradients for every parameter."""
    s = model.structure
    if s is None or s.head != HEAD_SIGMOID:
        raise ValueError("training requires a CTR model")
    if batch.labels is None:
        raise ValueError("training requires a labelled batch")
    x = batch.dense.array
    n = x.shape[0]
    table = model.parameters[s.table].array

    pre, post = [], [x]
    for w, b in s.dense_stack:
        a = _affine(post[-1], model, w, b, None)
        pre.append(a)
        post.append(relu(a))
    pooled = np.zeros((n, s.config.embed_dim), dtype=np.float32)
    for i, idx in enumerate(batch.sparse_indices):
        pooled[i] = _kernels.bag_f32(table, np.asarray(idx, dtype=np.int64))
    z = np.concatenate([post[-1], pooled], axis=1)

    p_pre, p_post = [], [z]
    last = len(s.predictor_stack) - 1
    for i, (w, b) in enumerate(s.predictor_stack):
        a = _affine(p_post[-1], model, w, b, None)
        p_pre.append(a)
        p_post.append(relu(a) if i < last else a)
    logits = p_post[-1][:, 0].copy()
    if s.use_fm:
        fm = np.array(
            [_fm_term(table, idx) for idx in batch.sparse_indices], dtype=np.float32
        )
        logits = logits + fm

    loss = bce_loss_from_logits(logits, batch.labels)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite training loss: {loss}")

    grads: dict[str, np.ndarray] = {}
    y = batch.labels.astype(np.float32)
    dlogit = (sigmoid(logits) - y) / np.float32(n)

    dz = dlogit.reshape(-1, 1)
    for i in range(last, -1, -1):
        w, b = s.predictor_stack[i]
        if i < last:
            dz = dz * (p_pre[i] > 0)
        grads[w] = _mm(p_post[i].T, dz)
        grads[b] = dz.sum(axis=0, dtype=np.float32)
        dz = _mm(dz, model.parameters[w].array.T)

    e = s.config.embed_dim
    dx, dpooled = dz[:, :e], dz[:, e:]

    dtable = np.zeros_like(table)
    for i, idx in enumerate(batch.sparse_indices):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size:
            np.add.at(dtable, idx, dpooled[i])
        if s.use_fm and idx.size >= 2:
            rows = table[idx]
            total = rows.sum(axis=0, dtype=np.float32)
            np.add.at(dtable, idx, dlogit[i] * (total - rows))
    grads[s.table] = dtable

    for i in range(len(s.dense_stack) - 1, -1, -1):
        w, b = s.dense_stack[i]
        dx = dx * (pre[i] > 0)
        grads[w] = _mm(post[i].T, dx)
        grads[b] = dx.sum(axis=0, dtype=np.float32)
        dx = _mm(dx, model.parameters[w].array.T)
    return loss, grads


def train_ctr(
    model: ModelGraph, batch: SyntheticBatch, cfg: TrainConfig
) -> tuple[ModelGraph, float]:
    """Minibatch SGD on binary cross-entropy with AUC early stopping.

    The batch is split 8:1:1 by sample-index hash; training runs on the
    first split and stops once the validation AUC fails to improve for
    `patience` consecutive epochs. The best-validation parameters are
    restored before returning.
    """
    train_idx, val_idx, _ = split_indices(batch.n)
    train, val = subset(batch, train_idx), subset(batch, val_idx)
    best_auc = -1.0
    best_params: dict[str, np.ndarray] | None = None
    stale = 0
    for epoch in range(cfg.epochs):
        order = philox(mix(cfg.seed, epoch)).permutation(train.n)
        for start in range(0, train.n, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            mini = subset(train, sel)
            _, grads = loss_and_gradients(model, mini)
            lr = np.float32(cfg.learning_rate)
            for name, g in grads.items():
                arr = model.parameters[name].array
                arr -= lr * g.reshape(arr.shape)
        scores = forward_batch(model, val.dense, val.sparse_indices)
        auc = auc_roc(scores.astype(np.float64), val.labels)
        if auc > best_auc:
            best_auc = auc
            best_params = {n: t.array.copy() for n, t in model.parameters.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_params is not None:
        for name, arr in best_params.items():
            model.parameters[name].array[...] = arr
    return model, best_auc


# --- checkpoints ----------------------------------------------------------

_MAGIC = b"DRSCKPT1"
_VERSION = 1
_TAG_CODES = {COMPONENT_MLP: 0, COMPONENT_EMBEDDING: 1}
_CODE_TAGS = {v: k for k, v in _TAG_CODES.items()}


def save_checkpoint(model: ModelGraph, path) -> None:
    """Binary checkpoint; parameter words are preserved bit-exactly.

    Layout (little-endian): magic, u16 version, u32 parameter count, then
    per parameter u16 name length + UTF-8 name, u8 component tag, u8 rank,
    u32 dims, raw float32 words; finally CRC32 over everything after the
    magic.
    """
    payload = bytearray()
    payload += struct.pack("<HI", _VERSION, len(model.parameters))
    for name, t in model.parameters.items():
        encoded = name.encode("utf-8")
        payload += struct.pack("<H", len(encoded)) + encoded
        payload += struct.pack("<BB", _TAG_CODES[model.component[name]], t.rank)
        payload += struct.pack(f"<{t.rank}I", *t.shape)
        payload += t.words().astype("<u4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path) -> ModelGraph:
    """Inverse of save_checkpoint; the result is a parameters-only graph.

    Raises CheckpointError naming the byte offset of the first problem.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 10 or blob[: len(_MAGIC)] != _MAGIC:
        raise CheckpointError("bad magic at offset 0")
    payload, stored = blob[len(_MAGIC) : -4], blob[-4:]
    if zlib.crc32(payload) != struct.unpack("<I", stored)[0]:
        raise CheckpointError(f"checksum mismatch at offset {len(blob) - 4}")

    off = 0

    def take(n, what):
        nonlocal off
        if off + n > len(payload):
            raise CheckpointError(
                f"truncated {what} at offset {len(_MAGIC) + off}"
            )
        part = payload[off : off + n]
        off += n
        return part

    version, count = struct.unpack("<HI", take(6, "header"))
    if version != _VERSION:
        raise CheckpointError(f"unsupported version {version} at offset 8")
    params: dict[str, Tensor] = {}
    tags: dict[str, str] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        tag_code, rank = struct.unpack("<BB", take(2, "tag/rank"))
        if tag_code not in _CODE_TAGS:
            raise CheckpointError(
                f"unknown component tag {tag_code} at offset {len(_MAGIC) + off - 2}"
            )
        if rank not in (1, 2):
            raise CheckpointError(
                f"unsupported rank {rank} at offset {len(_MAGIC) + off - 1}"
            )
        dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
        n_words = int(np.prod(dims))
        words = np.frombuffer(take(4 * n_words, f"payload of {name!r}"), dtype="<u4")
        params[name] = Tensor.from_words(words.astype(np.uint32), dims)
        tags[name] = _CODE_TAGS[tag_code]
    if off != len(payload):
        raise CheckpointError(f"trailing bytes at offset {len(_MAGIC) + off}")
    return ModelGraph(params, tags, structure=None)
