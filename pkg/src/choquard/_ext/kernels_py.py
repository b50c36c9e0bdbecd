"""NumPy fallback for the compiled kernels."""

import numpy as np

_CHUNK_ELEMS = 1 << 22


def direct_sum(f, code, table, center):
    """Return ``g[p] = sum_q table[code[p] - code[q] + center] * f[q]``."""
    f = np.asarray(f, dtype=float)
    code = np.asarray(code, dtype=np.int64)
    nz = np.flatnonzero(f)
    qcode, qval = code[nz], f[nz]
    out = np.zeros(f.size)
    if nz.size == 0:
        return out
    rows = max(1, _CHUNK_ELEMS // nz.size)
    for start in range(0, f.size, rows):
        block = code[start:start + rows, None] + center - qcode[None, :]
        out[start:start + rows] = table[block] @ qval
    return out
