"""Numerical core routines.

Modules
-------
_kernels
    Compiled (Cython) accumulation loops; optional, built at install time.
kernels_py
    numpy implementations of the same routines, used when the compiled
    module is unavailable or ``PLANARCDA_PURE=1`` is set.
"""
