"""Backend selection for the accumulation kernels.

The compiled module is used when it imported cleanly and ``PLANARCDA_PURE``
is unset or ``0``; otherwise the numpy versions are bound. ``BACKEND`` names
the active one.

Even with the compiled backend the Gram kernels stay on numpy: they reduce
to a single BLAS matmul there, which beats the explicit loops by 2-6x
(``benchmarks/bench_kernels.py``). The compiled versions remain importable
from ``planarcda._ext._kernels``.
"""
import os

from ._ext import kernels_py

_force_pure = os.environ.get("PLANARCDA_PURE", "0") not in ("", "0")

try:
    if _force_pure:
        raise ImportError("PLANARCDA_PURE set")
    from ._ext import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = kernels_py
    BACKEND = "python"

pairwise_sqdist = _impl.pairwise_sqdist
scatter_pair = _impl.scatter_pair
bilinear_gram = kernels_py.bilinear_gram
sym_gram = kernels_py.sym_gram
laplacian_gram = kernels_py.laplacian_gram


def compiled_available():
    try:
        from ._ext import _kernels  # noqa: F401
    except ImportError:
        return False
    return True
