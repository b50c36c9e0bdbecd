"""Kernel backend selection.

The compiled extension is used when importable; ``CHOQUARD_PURE_PYTHON=1``
forces the NumPy fallback.
"""

import os

from ._ext import kernels_py

BACKEND = "python"
direct_sum = kernels_py.direct_sum

if os.environ.get("CHOQUARD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import _kernels
    except ImportError:  # extension not built
        pass
    else:
        direct_sum = _kernels.direct_sum
        BACKEND = "cython"

BACKENDS = {"python": kernels_py.direct_sum}
try:
    from ._ext import _kernels as _compiled

    BACKENDS["cython"] = _compiled.direct_sum
except ImportError:
    pass
