"""Hot graph kernels with a compiled core and a numpy fallback.

The compiled extension (``_speedups``, built from Cython) is preferred when
importable; set ``KGACTIVE_PURE_PYTHON=1`` to force the fallback.  Both
implementations share the same contracts:

``brandes_betweenness(indptr, indices, n, sources)``
    Shortest-path dependency accumulation over the given BFS sources of a
    directed unweighted CSR graph.

``power_iterate(indptr, indices, weights, base, f0, alpha, eps, max_iters)``
    Iterates ``f <- alpha * W f + base`` until the L1 change drops below
    ``eps``; returns ``(f, iterations, converged)``.

``neighbor_sum(indptr, indices, mat)``
    Row-wise aggregation: row i of the result is the sum of ``mat`` rows
    listed in the CSR neighbourhood of i.  Works in the matrix's own
    precision (float32 or float64).
"""
import os

import numpy as np

if os.environ.get("KGACTIVE_PURE_PYTHON"):
    from . import _fallback as _impl

    USING_COMPILED = False
else:
    try:
        from . import _speedups as _impl  # type: ignore[attr-defined]

        USING_COMPILED = True
    except ImportError:
        from . import _fallback as _impl

        USING_COMPILED = False


def _csr_arrays(indptr, indices):
    return (
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
    )


def brandes_betweenness(indptr, indices, n, sources=None):
    indptr, indices = _csr_arrays(indptr, indices)
    if sources is None:
        sources = np.arange(n, dtype=np.int64)
    sources = np.ascontiguousarray(sources, dtype=np.int64)
    return _impl.brandes_betweenness(indptr, indices, int(n), sources)


def power_iterate(indptr, indices, weights, base, f0, alpha, eps, max_iters):
    indptr, indices = _csr_arrays(indptr, indices)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    base = np.ascontiguousarray(base, dtype=np.float64)
    f0 = np.ascontiguousarray(f0, dtype=np.float64)
    f, iters, converged = _impl.power_iterate(
        indptr, indices, weights, base, f0, float(alpha), float(eps), int(max_iters)
    )
    return f, int(iters), bool(converged)


def neighbor_sum(indptr, indices, mat):
    indptr, indices = _csr_arrays(indptr, indices)
    mat = np.ascontiguousarray(mat)
    if mat.dtype != np.float32:
        mat = np.ascontiguousarray(mat, dtype=np.float64)
    return _impl.neighbor_sum(indptr, indices, mat)
