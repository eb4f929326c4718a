"""Pure-numpy kernels, bit-identical to the compiled core.

The gemm loop runs over the shared dimension so that, per output element,
products are rounded to float32 and accumulated left to right -- the same
order the compiled kernel and the scalar reference use.
"""

import numpy as np

_quiet = {"over": "ignore", "invalid": "ignore", "under": "ignore"}


def gemm_f32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float32)
    with np.errstate(**_quiet):
        for l in range(k):
            out += a[:, l : l + 1] * b[l]
    return out


def bag_f32(table: np.ndarray, idx: np.ndarray) -> np.ndarray:
    out = np.zeros(table.shape[1], dtype=np.float32)
    with np.errstate(**_quiet):
        for r in idx:
            out += table[r]
    return out


def xor_apply_u32(words: np.ndarray, idx: np.ndarray, masks: np.ndarray) -> None:
    # unbuffered ufunc so repeated element indices each take effect
    np.bitwise_xor.at(words, idx, masks)
