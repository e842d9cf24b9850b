"""OpenEA-format dataset loading, graph indexing and bachelor injection.

A dataset directory contains ``rel_triples_1``, ``rel_triples_2`` and
``ent_links``: UTF-8 text, one record per line, exactly one TAB between
fields.  Entity and relation URIs are interned to dense integer ids at
load time; all downstream math works on ids.
"""
from __future__ import annotations

import math
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DatasetError, ParseError, ReferentialIntegrityError

TRIPLES_1 = "rel_triples_1"
TRIPLES_2 = "rel_triples_2"
LINKS = "ent_links"
BACHELORS = "bachelors_1"


class KnowledgeGraph:
    """One side of an alignment task: interned entities, relations, triples.

    ``triples`` is an (m, 3) int64 array of (head, relation, tail) ids.
    Adjacency views are derived lazily and cached; instances are treated as
    immutable after construction.
    """

    def __init__(self, entity_uris: Sequence[str], relation_uris: Sequence[str], triples: np.ndarray):
        self.entity_uris = list(entity_uris)
        self.relation_uris = list(relation_uris)
        self.uri_to_id = {u: i for i, u in enumerate(self.entity_uris)}
        self.relation_to_id = {u: i for i, u in enumerate(self.relation_uris)}
        if len(self.uri_to_id) != len(self.entity_uris):
            raise DatasetError("duplicate entity uri")
        if len(self.relation_to_id) != len(self.relation_uris):
            raise DatasetError("duplicate relation uri")
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        if triples.size:
            if triples[:, [0, 2]].min() < 0 or triples[:, [0, 2]].max() >= self.num_entities:
                raise DatasetError("triple references entity id out of range")
            if triples[:, 1].min() < 0 or triples[:, 1].max() >= max(self.num_relations, 1):
                raise DatasetError("triple references relation id out of range")
        self.triples = triples

    @property
    def num_entities(self) -> int:
        return len(self.entity_uris)

    @property
    def num_relations(self) -> int:
        return len(self.relation_uris)

    @property
    def entity_ids(self) -> np.ndarray:
        return np.arange(self.num_entities, dtype=np.int64)

    @classmethod
    def from_uri_triples(cls, uri_triples: Iterable[tuple[str, str, str]]) -> "KnowledgeGraph":
        """Intern URIs in first-appearance order and build the graph."""
        ent_uris: list[str] = []
        rel_uris: list[str] = []
        ent_idx: dict[str, int] = {}
        rel_idx: dict[str, int] = {}
        rows = []
        for h, r, t in uri_triples:
            for u in (h, t):
                if u not in ent_idx:
                    ent_idx[u] = len(ent_uris)
                    ent_uris.append(u)
            if r not in rel_idx:
                rel_idx[r] = len(rel_uris)
                rel_uris.append(r)
            rows.append((ent_idx[h], rel_idx[r], ent_idx[t]))
        return cls(ent_uris, rel_uris, np.asarray(rows, dtype=np.int64).reshape(-1, 3))

    @cached_property
    def out_neighbors(self) -> list[list[tuple[int, int]]]:
        """Per entity: list of (relation, tail) pairs, in triple order."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_entities)]
        for h, r, t in self.triples:
            adj[h].append((int(r), int(t)))
        return adj

    @cached_property
    def in_neighbors(self) -> list[list[tuple[int, int]]]:
        """Per entity: list of (relation, head) pairs, in triple order."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.num_entities)]
        for h, r, t in self.triples:
            adj[t].append((int(r), int(h)))
        return adj

    @cached_property
    def dedup_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed entity edges with parallel relations collapsed.

        Returns (heads, tails) sorted lexicographically by (head, tail).
        Centrality and influence computations work on this simple graph.
        """
        if not self.triples.size:
            empty = np.empty(0, dtype=np.int64)
            return empty, empty
        pairs = np.unique(self.triples[:, [0, 2]], axis=0)
        return pairs[:, 0].copy(), pairs[:, 1].copy()

    @cached_property
    def undirected_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetrized deduplicated edges (both directions present)."""
        h, t = self.dedup_edges
        if not h.size:
            return h, t
        pairs = np.unique(np.concatenate([np.stack([h, t], axis=1), np.stack([t, h], axis=1)]), axis=0)
        return pairs[:, 0].copy(), pairs[:, 1].copy()


def csr_from_edges(heads: np.ndarray, tails: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Build CSR (indptr, indices) from an edge list, rows sorted by head."""
    order = np.lexsort((tails, heads))
    heads = np.asarray(heads, dtype=np.int64)[order]
    tails = np.asarray(tails, dtype=np.int64)[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, heads + 1, 1)
    np.cumsum(indptr, out=indptr)
    return indptr, tails


class AlignmentStore:
    """Gold alignment plus the label bookkeeping of a sampling campaign.

    ``gold`` maps e1 -> e2 for every aligned pair; ``bachelors1`` holds the
    KG1 entities with no counterpart.  ``labelled_pos``/``labelled_neg`` and
    ``pool`` partition E1 together at all times.
    """

    def __init__(self, n1: int, n2: int, gold: dict[int, int]):
        self.n1 = n1
        self.n2 = n2
        self.gold = dict(gold)
        self.gold_rev: dict[int, int] = {}
        for e1, e2 in self.gold.items():
            if e2 in self.gold_rev:
                raise DatasetError(f"alignment is not one-to-one: entity {e2} on side 2 appears twice")
            self.gold_rev[e2] = e1
        self.bachelors1 = frozenset(range(n1)) - frozenset(self.gold)
        self.labelled_pos: dict[int, int] = {}
        self.labelled_neg: set[int] = set()
        self.pool: set[int] = set(range(n1))

    def copy(self) -> "AlignmentStore":
        dup = AlignmentStore(self.n1, self.n2, self.gold)
        dup.labelled_pos = dict(self.labelled_pos)
        dup.labelled_neg = set(self.labelled_neg)
        dup.pool = set(self.pool)
        return dup

    @property
    def consumed2(self) -> set[int]:
        """KG2 entities already matched by a positive label."""
        return set(self.labelled_pos.values())

    @property
    def test_pairs(self) -> list[tuple[int, int]]:
        """Gold pairs not yet used as training labels, sorted by e1."""
        return [(e1, e2) for e1, e2 in sorted(self.gold.items()) if e1 not in self.labelled_pos]

    def label_match(self, e1: int, e2: int) -> None:
        if e1 not in self.pool:
            raise DatasetError(f"entity {e1} is not in the unlabelled pool")
        if e2 in self.consumed2:
            raise DatasetError(f"entity {e2} is already matched")
        self.pool.remove(e1)
        self.labelled_pos[e1] = e2

    def label_bachelor(self, e1: int) -> None:
        if e1 not in self.pool:
            raise DatasetError(f"entity {e1} is not in the unlabelled pool")
        self.pool.remove(e1)
        self.labelled_neg.add(e1)


def validate_store(kg1: KnowledgeGraph, kg2: KnowledgeGraph, store: AlignmentStore) -> None:
    """Raise DatasetError when any store invariant is broken."""
    if store.n1 != kg1.num_entities or store.n2 != kg2.num_entities:
        raise DatasetError("store sizes disagree with the graphs")
    all1 = set(range(store.n1))
    for e1, e2 in store.gold.items():
        if not (0 <= e1 < store.n1 and 0 <= e2 < store.n2):
            raise DatasetError(f"gold pair ({e1}, {e2}) out of range")
    if len(set(store.gold.values())) != len(store.gold):
        raise DatasetError("gold is not one-to-one")
    if store.bachelors1 != all1 - set(store.gold):
        raise DatasetError("bachelors1 must be exactly the entities without a counterpart")
    for e1, e2 in store.labelled_pos.items():
        if store.gold.get(e1) != e2:
            raise DatasetError(f"labelled pair ({e1}, {e2}) is not in the gold alignment")
    if not store.labelled_neg <= store.bachelors1:
        raise DatasetError("labelled bachelors must be true bachelors")
    labelled1 = set(store.labelled_pos) | store.labelled_neg
    if store.pool & labelled1:
        raise DatasetError("pool overlaps labelled entities")
    if store.pool | labelled1 != all1:
        raise DatasetError("pool and labelled sets must partition E1")
    if len(store.labelled_pos) + len(store.labelled_neg) + len(store.pool) != store.n1:
        raise DatasetError("label sets overlap")


def _read_tsv(path: Path, n_fields: int) -> list[tuple[str, ...]]:
    if not path.is_file():
        raise DatasetError(f"missing dataset file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != n_fields:
                raise ParseError(path, line_no, f"expected {n_fields} tab-separated fields, got {len(fields)}")
            if any(not f for f in fields):
                raise ParseError(path, line_no, "empty field")
            rows.append(tuple(fields))
    return rows


def load_openea(directory: str | Path) -> tuple[KnowledgeGraph, KnowledgeGraph, AlignmentStore]:
    """Load a dataset directory into indexed graphs and an alignment store.

    The gold alignment is taken from ``ent_links``; the pool starts as the
    whole of E1 and every E1 entity outside the gold alignment counts as a
    bachelor.
    """
    directory = Path(directory)
    kg1 = KnowledgeGraph.from_uri_triples(_read_tsv(directory / TRIPLES_1, 3))
    kg2 = KnowledgeGraph.from_uri_triples(_read_tsv(directory / TRIPLES_2, 3))
    gold: dict[int, int] = {}
    seen2: set[int] = set()
    for u1, u2 in _read_tsv(directory / LINKS, 2):
        if u1 not in kg1.uri_to_id:
            raise ReferentialIntegrityError(f"link references unknown KG1 entity: {u1}")
        if u2 not in kg2.uri_to_id:
            raise ReferentialIntegrityError(f"link references unknown KG2 entity: {u2}")
        e1, e2 = kg1.uri_to_id[u1], kg2.uri_to_id[u2]
        if e1 in gold or e2 in seen2:
            raise DatasetError(f"alignment is not one-to-one at link {u1} -> {u2}")
        gold[e1] = e2
        seen2.add(e2)
    return kg1, kg2, AlignmentStore(kg1.num_entities, kg2.num_entities, gold)


def removal_order(store: AlignmentStore, seed: int) -> list[int]:
    """Seeded permutation of gold e1 ids; injection removes a prefix.

    Using a prefix makes samples nested: the entities removed at a smaller
    fraction are a subset of those removed at any larger fraction under the
    same seed.
    """
    e1s = sorted(store.gold)
    rng = np.random.default_rng(seed)
    return [e1s[i] for i in rng.permutation(len(e1s))]


def inject_bachelors(
    kg2: KnowledgeGraph,
    store: AlignmentStore,
    fraction: float,
    seed: int,
) -> tuple[KnowledgeGraph, AlignmentStore]:
    """Turn a share of gold pairs into bachelors by deleting their KG2 side.

    Each sampled pair's KG2 entity is dropped together with all incident
    triples; its KG1 entity keeps no counterpart.  KG1 is untouched.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"bachelor fraction must lie in [0, 1], got {fraction}")
    if store.labelled_pos or store.labelled_neg:
        raise ConfigError("bachelor injection requires an unlabelled store")
    count = int(math.floor(fraction * len(store.gold) + 1e-9))
    removed_e1 = removal_order(store, seed)[:count]
    removed_uris = {kg2.entity_uris[store.gold[e1]] for e1 in removed_e1}

    kept_uris = [u for u in kg2.entity_uris if u not in removed_uris]
    new_id = {u: i for i, u in enumerate(kept_uris)}
    kept_triples = [
        (new_id[kg2.entity_uris[h]], int(r), new_id[kg2.entity_uris[t]])
        for h, r, t in kg2.triples
        if kg2.entity_uris[h] not in removed_uris and kg2.entity_uris[t] not in removed_uris
    ]
    new_kg2 = KnowledgeGraph(kept_uris, kg2.relation_uris, np.asarray(kept_triples, dtype=np.int64).reshape(-1, 3))

    removed_set = set(removed_e1)
    new_gold = {
        e1: new_id[kg2.entity_uris[e2]] for e1, e2 in store.gold.items() if e1 not in removed_set
    }
    return new_kg2, AlignmentStore(store.n1, new_kg2.num_entities, new_gold)


def save_openea(
    directory: str | Path,
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    store: AlignmentStore,
) -> None:
    """Re-serialize a dataset; adds ``bachelors_1`` when bachelors exist."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, kg in ((TRIPLES_1, kg1), (TRIPLES_2, kg2)):
        with open(directory / name, "w", encoding="utf-8") as fh:
            for h, r, t in kg.triples:
                fh.write(f"{kg.entity_uris[h]}\t{kg.relation_uris[r]}\t{kg.entity_uris[t]}\n")
    with open(directory / LINKS, "w", encoding="utf-8") as fh:
        for e1, e2 in sorted(store.gold.items()):
            fh.write(f"{kg1.entity_uris[e1]}\t{kg2.entity_uris[e2]}\n")
    if store.bachelors1:
        with open(directory / BACHELORS, "w", encoding="utf-8") as fh:
            for e1 in sorted(store.bachelors1):
                fh.write(f"{kg1.entity_uris[e1]}\n")
