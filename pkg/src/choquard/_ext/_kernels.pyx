# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Direct O(M^2) Riesz summation over masked nodes."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def direct_sum(const double[::1] f, const long long[::1] code, const double[::1] table,
               long long center):
    """Return ``g[p] = sum_q table[code[p] - code[q] + center] * f[q]``.

    ``code`` holds the linear offset code of each node in the table layout;
    zero entries of ``f`` are skipped.
    """
    cdef Py_ssize_t m = f.shape[0]
    cdef Py_ssize_t p, q, k, nnz = 0
    cdef long long base
    cdef double acc
    out = np.zeros(m, dtype=np.float64)
    cdef double[::1] g = out
    nz_idx = np.empty(m, dtype=np.int64)
    cdef long long[::1] nz = nz_idx
    for q in range(m):
        if f[q] != 0.0:
            nz[nnz] = q
            nnz += 1
    cdef long long[::1] qcode = np.empty(nnz, dtype=np.int64)
    cdef double[::1] qval = np.empty(nnz, dtype=np.float64)
    for k in range(nnz):
        qcode[k] = code[nz[k]]
        qval[k] = f[nz[k]]
    with nogil:
        for p in range(m):
            base = code[p] + center
            acc = 0.0
            for k in range(nnz):
                acc = acc + table[base - qcode[k]] * qval[k]
            g[p] = acc
    return out
