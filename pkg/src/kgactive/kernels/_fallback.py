"""Numpy implementations of the graph kernels.

Used when the compiled extension is unavailable.  Matches the compiled
semantics; accumulation order may differ in the last float ulp.
"""
from collections import deque

import numpy as np


def brandes_betweenness(indptr, indices, n, sources):
    """Dependency accumulation for betweenness centrality (directed BFS)."""
    cb = np.zeros(n, dtype=np.float64)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n, dtype=np.float64)
    delta = np.empty(n, dtype=np.float64)
    for s in sources:
        s = int(s)
        dist.fill(-1)
        sigma.fill(0.0)
        dist[s] = 0
        sigma[s] = 1.0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            dv = dist[v]
            for w in indices[indptr[v]:indptr[v + 1]]:
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue.append(w)
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        delta.fill(0.0)
        # Reverse BFS order guarantees every strictly-farther neighbour is
        # finished before its predecessors are touched.
        for v in reversed(order):
            dv = dist[v]
            acc = 0.0
            for w in indices[indptr[v]:indptr[v + 1]]:
                if dist[w] == dv + 1:
                    acc += sigma[v] / sigma[w] * (1.0 + delta[w])
            delta[v] += acc
            if v != s:
                cb[v] += delta[v]
    return cb


def power_iterate(indptr, indices, weights, base, f0, alpha, eps, max_iters):
    """Iterate ``f <- alpha * W f + base`` until the L1 change is < eps."""
    n = indptr.size - 1
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))
    f = f0.astype(np.float64, copy=True)
    for it in range(1, max_iters + 1):
        f_new = alpha * np.bincount(rows, weights=weights * f[indices], minlength=n) + base
        change = np.abs(f_new - f).sum()
        f = f_new
        if change < eps:
            return f, it, True
    return f, max_iters, False


def neighbor_sum(indptr, indices, mat):
    """Row i of the result is the sum of ``mat`` rows listed for i in CSR form."""
    n = indptr.size - 1
    if n == 0 or indices.size == 0:
        return np.zeros((n, mat.shape[1]), dtype=mat.dtype)
    counts = np.diff(indptr)
    gathered = mat[indices]
    if np.all(counts > 0):
        # reduceat treats an empty segment as a single-element read, so this
        # fast path only applies when every row has at least one neighbour.
        return np.add.reduceat(gathered, indptr[:-1], axis=0)
    out = np.zeros((n, mat.shape[1]), dtype=mat.dtype)
    rows = np.repeat(np.arange(n, dtype=np.int64), counts)
    np.add.at(out, rows, gathered)
    return out
