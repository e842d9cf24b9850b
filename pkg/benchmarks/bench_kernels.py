"""Times the compiled graph kernels against the pure-numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--nodes 2000] [--edges-per-node 8]
                                       [--dims 256] [--repeats 5]

Each kernel runs on the same random CSR graph in both implementations and
reports the best-of-``repeats`` wall time plus the speedup factor.  Results
are also verified to agree between implementations before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kgactive.kernels import _fallback

try:
    from kgactive.kernels import _speedups
except ImportError:  # pragma: no cover - benchmark guard
    _speedups = None


def random_csr(n: int, edges_per_node: int, rng: np.random.Generator):
    heads = np.repeat(np.arange(n), edges_per_node)
    tails = rng.integers(0, n, size=n * edges_per_node)
    keep = heads != tails
    heads, tails = heads[keep], tails[keep]
    order = np.lexsort((tails, heads))
    heads, tails = heads[order], tails[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, heads + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr.astype(np.int64), tails.astype(np.int64)


def best_of(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=2000)
    parser.add_argument("--edges-per-node", type=int, default=8)
    parser.add_argument("--dims", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--betweenness-sources", type=int, default=256)
    args = parser.parse_args()

    if _speedups is None:
        raise SystemExit("compiled extension not importable; build it first (pip install -e .)")

    rng = np.random.default_rng(0)
    n = args.nodes
    indptr, indices = random_csr(n, args.edges_per_node, rng)
    sources = np.sort(rng.choice(n, size=min(args.betweenness_sources, n), replace=False)).astype(np.int64)
    weights = rng.random(len(indices))
    base = rng.random(n)
    f0 = np.zeros(n)
    mat = rng.standard_normal((n, args.dims))

    cases = [
        (
            f"brandes_betweenness ({len(sources)} sources)",
            lambda impl: impl.brandes_betweenness(indptr, indices, n, sources),
        ),
        (
            "power_iterate (alpha=0.1, eps=1e-10)",
            lambda impl: impl.power_iterate(indptr, indices, weights, base, f0, 0.1, 1e-10, 500)[0],
        ),
        (
            f"neighbor_sum ({n}x{args.dims})",
            lambda impl: impl.neighbor_sum(indptr, indices, mat),
        ),
    ]

    print(f"graph: {n} nodes, {len(indices)} edges; repeats={args.repeats} (best-of)")
    print(f"{'kernel':44s} {'compiled':>10s} {'fallback':>10s} {'speedup':>8s}")
    for name, call in cases:
        got = call(_speedups)
        want = call(_fallback)
        if not np.allclose(np.asarray(got, dtype=float), np.asarray(want, dtype=float), atol=1e-9):
            raise SystemExit(f"implementations disagree on {name}")
        t_c = best_of(lambda: call(_speedups), args.repeats)
        t_f = best_of(lambda: call(_fallback), args.repeats)
        print(f"{name:44s} {t_c * 1e3:9.2f}ms {t_f * 1e3:9.2f}ms {t_f / t_c:7.1f}x")


if __name__ == "__main__":
    main()
