"""Hot numeric kernels with two interchangeable implementations.

The numba path (:mod:`pcsuq.kernels._numba_impl`) JIT-compiles the split-search
and coordinate-descent loops; the numpy path (:mod:`pcsuq.kernels._numpy_impl`)
is a vectorized fallback that produces identical split decisions (both paths
derive costs from stable-sorted prefix sums, so tie-breaking agrees exactly).

Selection is controlled by the ``PCSUQ_KERNELS`` environment variable, read at
import time:

* ``auto`` (default) — numba if importable, else numpy
* ``numba`` — require numba, raise if unavailable
* ``numpy`` — force the pure-numpy fallback

``benchmarks/kernel_bench.py`` times the two paths against each other.
"""

import os

from . import _numpy_impl

_MODE = os.environ.get("PCSUQ_KERNELS", "auto").lower()

if _MODE not in ("auto", "numba", "numpy"):
    raise ImportError(f"PCSUQ_KERNELS must be auto, numba or numpy, got {_MODE!r}")

if _MODE == "numpy":
    _impl = _numpy_impl
    ACTIVE = "numpy"
else:
    try:
        from . import _numba_impl
        _impl = _numba_impl
        ACTIVE = "numba"
    except ImportError:
        if _MODE == "numba":
            raise
        _impl = _numpy_impl
        ACTIVE = "numpy"

best_split_mse = _impl.best_split_mse
best_split_gini = _impl.best_split_gini
lasso_cd = _impl.lasso_cd

__all__ = ["ACTIVE", "best_split_mse", "best_split_gini", "lasso_cd"]
