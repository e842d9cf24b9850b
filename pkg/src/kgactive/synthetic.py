"""Synthetic aligned KG pairs for benchmarks and end-to-end tests.

The generator builds a random fixed-out-degree digraph, then makes an
isomorphic copy with renamed URIs, shuffled entity interning order and
shuffled triple order.  The gold alignment is the URI correspondence.
Bachelor variants are produced by the standard injection operation, which
removes a share of KG2 counterparts together with their incident triples.
"""
from __future__ import annotations

import numpy as np

from .dataset import AlignmentStore, KnowledgeGraph, inject_bachelors
from .errors import ConfigError


def make_aligned_pair(
    n_entities: int = 300,
    out_degree: int = 3,
    n_relations: int = 4,
    seed: int = 0,
    target_skew: float = 0.0,
) -> tuple[KnowledgeGraph, KnowledgeGraph, AlignmentStore]:
    """Random digraph plus an isomorphic, reshuffled copy and its gold links.

    ``target_skew`` biases link targets toward a seeded popularity ranking
    (Zipf exponent).  At 0 every entity is an equally likely target and
    in-degrees concentrate around ``out_degree``; above 0 the in-degree
    distribution grows a heavy tail — a few hub entities receive most links
    while the rest are covered by only a handful of sources.
    """
    if n_entities < 2 or out_degree < 1 or n_relations < 1:
        raise ConfigError("need at least two entities, one out-edge and one relation")
    if out_degree >= n_entities:
        raise ConfigError("out_degree must be smaller than the number of entities")
    if target_skew < 0:
        raise ConfigError(f"target_skew must be >= 0, got {target_skew}")
    rng = np.random.default_rng(seed)
    popularity = None
    if target_skew > 0:
        ranks = rng.permutation(n_entities).astype(float)
        popularity = 1.0 / (ranks + 1.0) ** target_skew
    triples1 = []
    for head in range(n_entities):
        if popularity is None:
            targets = rng.choice(n_entities - 1, size=out_degree, replace=False)
            targets = np.where(targets >= head, targets + 1, targets)
        else:
            weights = popularity.copy()
            weights[head] = 0.0
            targets = rng.choice(n_entities, size=out_degree, replace=False, p=weights / weights.sum())
        for tail in targets:
            triples1.append((f"x1/e{head}", f"rel/r{int(rng.integers(n_relations))}", f"x1/e{int(tail)}"))
    kg1 = KnowledgeGraph.from_uri_triples(triples1)

    order = rng.permutation(len(triples1))
    triples2 = [
        (f"x2/e{triples1[i][0][4:]}", triples1[i][1], f"x2/e{triples1[i][2][4:]}") for i in order
    ]
    kg2 = KnowledgeGraph.from_uri_triples(triples2)
    gold = {
        kg1.uri_to_id[f"x1/e{k}"]: kg2.uri_to_id[f"x2/e{k}"] for k in range(n_entities)
    }
    return kg1, kg2, AlignmentStore(kg1.num_entities, kg2.num_entities, gold)


def make_benchmark(
    n_entities: int = 300,
    bachelor_fraction: float = 0.2,
    out_degree: int = 3,
    n_relations: int = 4,
    seed: int = 0,
    target_skew: float = 0.0,
) -> tuple[KnowledgeGraph, KnowledgeGraph, AlignmentStore]:
    """Aligned pair with a share of KG1 entities turned into bachelors."""
    kg1, kg2, store = make_aligned_pair(n_entities, out_degree, n_relations, seed, target_skew)
    kg2, store = inject_bachelors(kg2, store, bachelor_fraction, seed)
    return kg1, kg2, store


def sample_labels(
    store: AlignmentStore, n_labels: int, seed: int
) -> tuple[dict[int, int], set[int]]:
    """Uniform seeded sample of E1 entities with their oracle outcomes.

    Returns (labelled matchable pairs, labelled bachelors); together they
    cover exactly ``n_labels`` entities.
    """
    if not 0 < n_labels <= store.n1:
        raise ConfigError(f"label count must lie in [1, {store.n1}], got {n_labels}")
    rng = np.random.default_rng(seed)
    chosen = rng.permutation(store.n1)[:n_labels]
    pos = {int(e): store.gold[int(e)] for e in chosen if int(e) in store.gold}
    neg = {int(e) for e in chosen if int(e) not in store.gold}
    return pos, neg
