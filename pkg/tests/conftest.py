"""Shared fixtures: the toy benchmark pair and cheap model configurations."""
from __future__ import annotations

import numpy as np
import pytest

from kgactive.dataset import KnowledgeGraph
from kgactive.ea_model import TrainConfig
from kgactive.recognizer import RecognizerConfig
from kgactive.synthetic import make_aligned_pair, make_benchmark


@pytest.fixture(scope="session")
def toy():
    """60-entity aligned pair with exactly 10 injected bachelors."""
    kg1, kg2, store = make_benchmark(
        n_entities=60, bachelor_fraction=10 / 60, out_degree=3, seed=3
    )
    assert len(store.bachelors1) == 10
    return kg1, kg2, store


@pytest.fixture(scope="session")
def aligned_pair():
    """Small isomorphic pair with full gold alignment and no bachelors."""
    return make_aligned_pair(n_entities=40, out_degree=3, seed=5)


@pytest.fixture
def toy_store(toy):
    """Fresh mutable copy of the toy store for labelling tests."""
    return toy[2].copy()


@pytest.fixture(scope="session")
def fast_train() -> TrainConfig:
    return TrainConfig(dim=16, epochs=10, lr=0.05, seed=7)


@pytest.fixture(scope="session")
def fast_recognizer() -> RecognizerConfig:
    return RecognizerConfig(input_dim=32, output_dim=24, epochs=15, k_folds=3, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_digraph(n: int, edge_prob: float, rng: np.random.Generator) -> KnowledgeGraph:
    """Random directed graph (no self loops) as a single-relation KG."""
    triples = []
    touched = set()
    for h in range(n):
        for t in range(n):
            if h != t and rng.random() < edge_prob:
                triples.append((f"g/e{h}", "g/r0", f"g/e{t}"))
                touched.update((h, t))
    for lone in range(n):
        if lone not in touched:  # keep every node present in the graph
            triples.append((f"g/e{lone}", "g/r0", f"g/e{(lone + 1) % n}"))
    return KnowledgeGraph.from_uri_triples(triples)
