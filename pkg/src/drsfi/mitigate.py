"""Error mitigation schemes: checksum-checked ops, activation clipping, SBP.

ABFT appends a row-sum column to the right operand of a GEMM (or to the
embedding table); after the operation the checksum path and the row sums of
the result must agree within a relative tolerance. A mismatch discards the
result and re-executes. Because injected corruption is persistent, a retry
recomputes the same wrong answer, so detected errors end unrecoverable --
that behaviour is part of the contract, not a bug.

Selective bit protection has no runtime component here: it is realised as a
protected-bit mask handed to the injection engine (see inject.sbp_mask).
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .tensor import Tensor, gemm, embedding_bag

CLIP_ZERO_OUTSIDE = "zero_outside"
CLIP_CLAMP = "clamp"

KINDS = ("none", "abft", "clip", "sbp")

_quiet = {"over": "ignore", "invalid": "ignore", "under": "ignore"}


@dataclass
class MitigationPolicy:
    """Which scheme is active, with its thresholds, masks and retry limits."""

    kind: str = "none"
    clip_mode: str = CLIP_CLAMP
    clip_threshold: float = 6.0
    clip_range: tuple[float, float] | None = (-6.0, 6.0)
    abft_tolerance: float = 1e-4
    abft_max_retries: int = 3
    sbp_fields: frozenset[str] = frozenset({"sign", "exponent"})
    # Hook for modelling transient soft errors: returns a clean right-hand
    # operand to retry with. Unset (the default) models persistent corruption.
    recovery_source: Callable[[], Tensor] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown mitigation kind {self.kind!r}")
        if self.clip_mode not in (CLIP_ZERO_OUTSIDE, CLIP_CLAMP):
            raise ValueError(f"unknown clip mode {self.clip_mode!r}")
        if not self.clip_threshold > 0:
            raise ValueError("clip threshold must be positive")
        if not self.abft_tolerance > 0:
            raise ValueError("abft tolerance must be positive")
        if self.abft_max_retries < 0:
            raise ValueError("abft retry limit must be >= 0")
        self.sbp_fields = frozenset(self.sbp_fields)


@dataclass
class AbftStatus:
    """Outcome of one checked operation."""

    detected: bool = False
    retries_used: int = 0
    unrecoverable: bool = False


def augment_checksums(b: Tensor) -> Tensor:
    """Append the per-row sum as an extra column (left-to-right accumulation)."""
    if b.rank != 2:
        raise DimensionError("checksum augmentation requires a rank-2 tensor")
    k, n = b.shape
    sums = np.zeros(k, dtype=np.float32)
    with np.errstate(**_quiet):
        for j in range(n):
            sums += b.array[:, j]
    out = np.empty((k, n + 1), dtype=np.float32)
    out[:, :n] = b.array
    out[:, n] = sums
    return Tensor(out)


def _row_sums(values: np.ndarray) -> np.ndarray:
    out = np.zeros(values.shape[0], dtype=np.float32)
    with np.errstate(**_quiet):
        for j in range(values.shape[1]):
            out += values[:, j]
    return out


def _rows_disagree(check: np.ndarray, result: np.ndarray, tol: float) -> bool:
    # relative tolerance: bit-exact checksum equality cannot hold under
    # reordered float accumulation, so scale by the magnitudes involved
    got = _row_sums(result).astype(np.float64)
    mag = _row_sums(np.abs(result)).astype(np.float64)
    chk = check.astype(np.float64)
    scale = np.maximum(np.maximum(np.abs(chk), np.abs(mag)), 1.0)
    with np.errstate(invalid="ignore"):
        bad = np.abs(chk - got) > tol * scale
    # NaN anywhere in the comparison counts as a mismatch
    return bool(np.any(bad | ~np.isfinite(chk - got)))


def abft_gemm(a: Tensor, b_aug: Tensor, policy: MitigationPolicy) -> tuple[Tensor, AbftStatus]:
    """GEMM against a checksum-augmented right operand, with re-execution.

    Returns the product (without the checksum column) and the check status.
    Under persistent corruption every retry fails identically and the last
    result is returned with unrecoverable set.
    """
    if b_aug.rank != 2 or b_aug.shape[1] < 2:
        raise DimensionError("augmented operand must be rank 2 with >= 2 columns")
    n = b_aug.shape[1] - 1
    status = AbftStatus()
    operand = b_aug
    while True:
        c_aug = gemm(a, operand)
        c = Tensor(np.ascontiguousarray(c_aug.array[:, :n]))
        if not _rows_disagree(c_aug.array[:, n], c.array, policy.abft_tolerance):
            return c, status
        status.detected = True
        if status.retries_used >= policy.abft_max_retries:
            status.unrecoverable = True
            return c, status
        status.retries_used += 1
        if policy.recovery_source is not None:
            operand = policy.recovery_source()


def abft_embedding(
    table_aug: Tensor, indices: Sequence[int], policy: MitigationPolicy
) -> tuple[Tensor, AbftStatus]:
    """Embedding-bag lookup checked against the per-row checksum column."""
    if table_aug.rank != 2 or table_aug.shape[1] < 2:
        raise DimensionError("augmented table must be rank 2 with >= 2 columns")
    d = table_aug.shape[1] - 1
    status = AbftStatus()
    operand = table_aug
    while True:
        pooled = embedding_bag(operand, indices)
        out = Tensor(np.ascontiguousarray(pooled.array[:d]))
        check = pooled.array[d : d + 1]
        if not _rows_disagree(check, out.array.reshape(1, -1), policy.abft_tolerance):
            return out, status
        status.detected = True
        if status.retries_used >= policy.abft_max_retries:
            status.unrecoverable = True
            return out, status
        status.retries_used += 1
        if policy.recovery_source is not None:
            operand = policy.recovery_source()


def clip_activation(x: float, policy: MitigationPolicy) -> float:
    """Clipped activation of a scalar.

    NaN maps to 0 (out of range under either rule). If a symmetric range is
    set, the input is clamped to it first; then zero_outside keeps x only
    inside [0, T] and clamp saturates into [0, T].
    """
    x = float(x)
    if x != x:
        return 0.0
    if policy.clip_range is not None:
        lo, hi = policy.clip_range
        x = min(max(x, lo), hi)
    t = policy.clip_threshold
    if policy.clip_mode == CLIP_ZERO_OUTSIDE:
        return x if 0.0 <= x <= t else 0.0
    return min(max(x, 0.0), t)


def clip_activation_array(x: np.ndarray, policy: MitigationPolicy) -> np.ndarray:
    """Vectorised clip_activation with identical semantics, float32 out."""
    out = np.asarray(x, dtype=np.float32).copy()
    out[np.isnan(out)] = 0.0
    if policy.clip_range is not None:
        lo, hi = policy.clip_range
        out = np.minimum(np.maximum(out, np.float32(lo)), np.float32(hi))
    t = np.float32(policy.clip_threshold)
    if policy.clip_mode == CLIP_ZERO_OUTSIDE:
        keep = (out >= 0.0) & (out <= t)
        return np.where(keep, out, np.float32(0.0))
    return np.minimum(np.maximum(out, np.float32(0.0)), t)
