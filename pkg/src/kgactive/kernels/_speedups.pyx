# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled graph kernels: Brandes accumulation and power iteration."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def brandes_betweenness(
    const long long[::1] indptr,
    const long long[::1] indices,
    long long n,
    const long long[::1] sources,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] cb_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] cb = cb_arr
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dist_arr = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sigma_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] delta_arr = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] dist = dist_arr
    cdef double[::1] sigma = sigma_arr
    cdef double[::1] delta = delta_arr
    cdef long long[::1] order = order_arr

    cdef Py_ssize_t si, i, k, oi
    cdef long long s, v, w, head, tail, dv
    cdef double acc

    for si in range(sources.shape[0]):
        s = sources[si]
        for i in range(n):
            dist[i] = -1
            sigma[i] = 0.0
            delta[i] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        # order doubles as the BFS queue: head chases tail.
        order[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = order[head]
            head += 1
            dv = dist[v]
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dv + 1:
                    sigma[w] += sigma[v]
        for oi in range(tail - 1, -1, -1):
            v = order[oi]
            dv = dist[v]
            acc = 0.0
            for k in range(indptr[v], indptr[v + 1]):
                w = indices[k]
                if dist[w] == dv + 1:
                    acc += sigma[v] / sigma[w] * (1.0 + delta[w])
            delta[v] += acc
            if v != s:
                cb[v] += delta[v]
    return cb_arr


def power_iterate(
    const long long[::1] indptr,
    const long long[::1] indices,
    const double[::1] weights,
    const double[::1] base,
    const double[::1] f0,
    double alpha,
    double eps,
    long long max_iters,
):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.float64_t, ndim=1] f_arr = np.array(f0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double[::1] tmp
    cdef Py_ssize_t i, k
    cdef long long it
    cdef double acc, change, diff

    for it in range(1, max_iters + 1):
        change = 0.0
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += weights[k] * f[indices[k]]
            g[i] = alpha * acc + base[i]
            diff = g[i] - f[i]
            change += diff if diff >= 0 else -diff
        tmp = f
        f = g
        g = tmp
        if change < eps:
            return np.asarray(f).copy(), it, True
    return np.asarray(f).copy(), max_iters, False


ctypedef fused real:
    float
    double


def neighbor_sum(
    const long long[::1] indptr,
    const long long[::1] indices,
    const real[:, ::1] mat,
):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = mat.shape[1]
    if real is float:
        out_arr = np.zeros((n, d), dtype=np.float32)
    else:
        out_arr = np.zeros((n, d), dtype=np.float64)
    cdef real[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef long long src
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            src = indices[k]
            for j in range(d):
                out[i, j] += mat[src, j]
    return out_arr
