"""Select the kernel implementation at import time.

The compiled extension is preferred; set ``GRIDSINDY_PURE_PYTHON=1`` to force
the pure-Python fallback (used by the benchmark and the parity tests).
"""
import os

if os.environ.get("GRIDSINDY_PURE_PYTHON") == "1":
    from gridsindy import _pykernels as kernels
else:
    try:
        from gridsindy import _kernels as kernels
    except ImportError:
        from gridsindy import _pykernels as kernels

BACKEND = kernels.BACKEND

__all__ = ["kernels", "BACKEND"]
