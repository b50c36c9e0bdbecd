"""Numerical core routines.

Modules
-------
_kernels
    Compiled (Cython) direct Riesz summation.  Optional: when the extension
    is not built, :mod:`choquard._core` falls back to :mod:`.kernels_py`.
kernels_py
    Pure NumPy implementation with the same signatures.
"""
