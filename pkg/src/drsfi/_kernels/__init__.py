"""Kernel backend selection.

The compiled Cython core is used when available; otherwise the numpy
fallback takes over. Both produce bit-identical results (tested), so the
choice only affects speed. Set DRSFI_KERNEL=numpy or =cython to force one.
"""

import os

_choice = os.environ.get("DRSFI_KERNEL", "auto").lower()
if _choice not in ("auto", "cython", "numpy"):
    raise RuntimeError(f"DRSFI_KERNEL must be auto, cython or numpy, got {_choice!r}")

if _choice == "numpy":
    from . import fallback as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        from . import fallback as _impl

        BACKEND = "numpy"

gemm_f32 = _impl.gemm_f32
bag_f32 = _impl.bag_f32
xor_apply_u32 = _impl.xor_apply_u32
