"""Dense float32 tensors and the numeric kernels the models are built from.

Everything is 32-bit: parameters, activations and inputs share one numeric
container whose elements are bit-addressable (bit 0 = least significant
mantissa bit, bit 31 = sign). GEMM and embedding sums accumulate strictly
left to right so that outputs are bit-reproducible across runs and kernel
backends.
"""

from collections.abc import Sequence

import numpy as np

from . import _kernels
from .errors import DimensionError

_quiet = {"over": "ignore", "invalid": "ignore", "under": "ignore", "divide": "ignore"}


class Tensor:
    """Rank-1 or rank-2 array of 32-bit floats, contiguous and row-major."""

    __slots__ = ("array",)

    def __init__(self, values):
        arr = np.ascontiguousarray(values, dtype=np.float32)
        if arr.ndim not in (1, 2):
            raise DimensionError(f"tensor rank must be 1 or 2, got {arr.ndim}")
        self.array = arr

    @classmethod
    def zeros(cls, *shape: int) -> "Tensor":
        return cls(np.zeros(shape, dtype=np.float32))

    @classmethod
    def from_words(cls, words, shape) -> "Tensor":
        words = np.ascontiguousarray(words, dtype=np.uint32)
        return cls(words.view(np.float32).reshape(shape))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def rank(self) -> int:
        return self.array.ndim

    @property
    def size(self) -> int:
        return self.array.size

    def words(self) -> np.ndarray:
        """Flat uint32 view of the raw IEEE-754 words (writable, in place)."""
        return self.array.reshape(-1).view(np.uint32)

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def bits_equal(self, other: "Tensor") -> bool:
        """Bit-level equality, including NaN payloads and signed zeros."""
        return self.shape == other.shape and bool(
            np.array_equal(self.words(), other.words())
        )

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def float_to_word(value: float) -> int:
    """IEEE-754 single-precision word of a value (rounds to float32 first)."""
    return int(np.float32(value).view(np.uint32))


def word_to_float(word: int) -> np.float32:
    """Reinterpret a 32-bit word as float32; lossless for inf/nan payloads."""
    return np.uint32(word).view(np.float32)


def gemm(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with fixed left-to-right accumulation over the inner dim.

    Non-finite operand values propagate per IEEE-754; they are data here,
    not errors.
    """
    if a.rank != 2 or b.rank != 2:
        raise DimensionError("gemm requires rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return Tensor(_kernels.gemm_f32(a.array, b.array))


def embedding_bag(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Sum of the selected table rows, accumulated in index-list order."""
    if table.rank != 2:
        raise DimensionError("embedding table must be rank 2")
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")
    return Tensor(_kernels.bag_f32(table.array, idx))


def relu(x: np.ndarray) -> np.ndarray:
    # np.maximum propagates NaN, which is the behaviour we want
    return np.maximum(np.float32(0.0), x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(**_quiet):
        return np.float32(1.0) / (np.float32(1.0) + np.exp(-x))


def apply_activation(x: Tensor, kind: str, policy=None) -> Tensor:
    """Elementwise activation: relu, sigmoid, or the clipped variants.

    kind="clipped" dispatches to the mitigation rules and requires a policy.
    """
    if kind == "relu":
        return Tensor(relu(x.array))
    if kind == "sigmoid":
        return Tensor(sigmoid(x.array))
    if kind == "clipped":
        if policy is None:
            raise ValueError("clipped activation requires a mitigation policy")
        from .mitigate import clip_activation_array

        return Tensor(clip_activation_array(x.array, policy))
    raise ValueError(f"unknown activation kind {kind!r}")


def fm_interaction(embeddings: Sequence[Tensor]) -> float:
    """Sum of pairwise dot products via 0.5*(|sum v|^2 - sum |v|^2).

    The identity is evaluated with float64 accumulation: the subtraction
    cancels catastrophically in float32, which would break the pairwise
    brute-force equivalence bound.
    """
    if not embeddings:
        return 0.0
    d = embeddings[0].shape
    vecs = []
    for v in embeddings:
        if v.rank != 1 or v.shape != d:
            raise DimensionError("fm_interaction requires equal-length vectors")
        vecs.append(v.array.astype(np.float64))
    total = np.zeros(d[0], dtype=np.float64)
    sq = 0.0
    for v in vecs:
        total += v
        sq += float(np.dot(v, v))
    return 0.5 * (float(np.dot(total, total)) - sq)
