"""Matchable-vs-bachelor recognizer: twin graph encoders with an ensemble.

Each fold trains one graph-convolutional encoder per KG under a contrastive
objective: labelled counterpart pairs are pulled together, corrupted pairs
are pushed beyond a margin.  An entity's score is its best dot-product
similarity against the KG2 candidates; a shared threshold, found by grid
search over validation midpoints, turns scores into binary decisions.
Averaging K fold scores counters the sampling bias of a labelled set that
was itself chosen by the acquisition policy.

All gradients are hand-written numpy; training runs in single precision
(scores are exported as float64) and is deterministic per seed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._optim import Adam
from .dataset import KnowledgeGraph, csr_from_edges
from .kernels import neighbor_sum
from .errors import ConfigError, DomainError, TrainingError
from .evaluation import micro_f1
from .vectors import AcquisitionVector

RECOGNIZER_CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class RecognizerConfig:
    layers: int = 1
    input_dim: int = 500
    output_dim: int = 400
    k_folds: int = 5
    margin: float = 1.5
    balance: float = 0.1
    n_negatives: int = 10
    epochs: int = 60
    lr: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.layers < 0:
            raise ConfigError("layers must be nonnegative")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError("encoder dimensions must be positive")
        if self.k_folds < 1:
            raise ConfigError("k_folds must be at least 1")
        if self.margin <= 0 or self.balance <= 0 or self.n_negatives < 1:
            raise ConfigError("margin, balance and n_negatives must be positive")
        if self.epochs < 0 or self.lr <= 0:
            raise ConfigError("epochs must be nonnegative and lr positive")


class GcnEncoder:
    """Per-KG encoder: trainable input features plus L convolution layers.

    Layer update: h_i = l2_normalize(relu(sum_{j in N(i) + self} V h_j + b))
    over the undirected entity neighbourhood; the encoder output is the
    concatenation of every layer's representation including the input.
    """

    def __init__(self, params: dict[str, np.ndarray], layers: int):
        self.params = params
        self.layers = layers

    def copy(self) -> "GcnEncoder":
        return GcnEncoder({k: v.copy() for k, v in self.params.items()}, self.layers)


def init_encoder(n_entities: int, cfg: RecognizerConfig, rng: np.random.Generator) -> GcnEncoder:
    # Encoders train in single precision: halves the matmul and optimizer
    # cost while scores are re-exported as float64 (see fold_scores).
    params: dict[str, np.ndarray] = {
        "h0": rng.uniform(-0.01, 0.01, size=(n_entities, cfg.input_dim)).astype(np.float32)
    }
    prev = cfg.input_dim
    for layer in range(1, cfg.layers + 1):
        bound = np.sqrt(6.0 / (prev + cfg.output_dim))
        params[f"V{layer}"] = rng.uniform(-bound, bound, size=(prev, cfg.output_dim)).astype(np.float32)
        params[f"b{layer}"] = np.zeros(cfg.output_dim, dtype=np.float32)
        prev = cfg.output_dim
    return GcnEncoder(params, cfg.layers)


@lru_cache(maxsize=8)
def _self_loop_csr(kg: KnowledgeGraph) -> tuple[np.ndarray, np.ndarray]:
    h, t = kg.undirected_edges
    loops = kg.entity_ids
    return csr_from_edges(np.concatenate([h, loops]), np.concatenate([t, loops]), kg.num_entities)


def _neighbor_sum(indptr: np.ndarray, indices: np.ndarray, mat: np.ndarray) -> np.ndarray:
    return neighbor_sum(indptr, indices, mat)


def _forward(kg: KnowledgeGraph, encoder: GcnEncoder) -> tuple[np.ndarray, dict]:
    if encoder.params["h0"].shape[0] != kg.num_entities:
        raise ConfigError("encoder feature matrix does not match the graph size")
    indptr, indices = _self_loop_csr(kg)
    h = encoder.params["h0"]
    blocks = [h]
    cache: dict = {"indptr": indptr, "indices": indices, "zs": [], "ps": [], "hs": [h], "norms": []}
    for layer in range(1, encoder.layers + 1):
        z = _neighbor_sum(indptr, indices, h)
        p = z @ encoder.params[f"V{layer}"] + encoder.params[f"b{layer}"]
        r = np.maximum(p, 0.0)
        norms = np.linalg.norm(r, axis=1, keepdims=True)
        h = np.divide(r, norms, out=r.copy(), where=norms > 0)
        cache["zs"].append(z)
        cache["ps"].append(p)
        cache["hs"].append(h)
        cache["norms"].append(norms)
        blocks.append(h)
    return np.concatenate(blocks, axis=1), cache


def gcn_encode(kg: KnowledgeGraph, encoder: GcnEncoder) -> np.ndarray:
    """Concatenated multi-layer entity representations, one row per entity."""
    return _forward(kg, encoder)[0]


def _backward(encoder: GcnEncoder, cache: dict, g_out: np.ndarray) -> dict[str, np.ndarray]:
    d_in = encoder.params["h0"].shape[1]
    splits = [d_in]
    for layer in range(1, encoder.layers + 1):
        splits.append(splits[-1] + encoder.params[f"b{layer}"].size)
    blocks = [g_out[:, a:b] for a, b in zip([0] + splits, splits + [g_out.shape[1]])][: encoder.layers + 1]
    grads: dict[str, np.ndarray] = {}
    carried = np.zeros_like(blocks[-1])
    for layer in range(encoder.layers, 0, -1):
        g_h = blocks[layer] + carried
        h, p, z, norms = cache["hs"][layer], cache["ps"][layer - 1], cache["zs"][layer - 1], cache["norms"][layer - 1]
        # through row normalization: g_r = (g - h (h . g)) / ||r||, identity on zero rows
        inner = np.sum(g_h * h, axis=1, keepdims=True)
        g_r = np.divide(g_h - h * inner, norms, out=g_h.copy(), where=norms > 0)
        g_p = g_r * (p > 0)
        grads[f"b{layer}"] = g_p.sum(axis=0)
        grads[f"V{layer}"] = z.T @ g_p
        g_z = g_p @ encoder.params[f"V{layer}"].T
        # adjacency with self loops is symmetric, so its transpose action is itself
        carried = _neighbor_sum(cache["indptr"], cache["indices"], g_z)
    grads["h0"] = blocks[0] + carried
    return grads


def contrastive_loss(
    h1: np.ndarray,
    h2: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float,
    balance: float,
) -> float:
    """Sum of positive distances plus balance-weighted hinge on negatives."""
    loss = 0.0
    if len(positives):
        pos = np.asarray(positives, dtype=np.int64).reshape(-1, 2)
        loss += float(np.linalg.norm(h1[pos[:, 0]] - h2[pos[:, 1]], axis=1).sum())
    if len(negatives):
        neg = np.asarray(negatives, dtype=np.int64).reshape(-1, 2)
        dist = np.linalg.norm(h1[neg[:, 0]] - h2[neg[:, 1]], axis=1)
        loss += balance * float(np.maximum(margin - dist, 0.0).sum())
    return loss


def _contrastive_grad(
    h1: np.ndarray,
    h2: np.ndarray,
    positives: np.ndarray,
    negatives: np.ndarray,
    margin: float,
    balance: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    g1 = np.zeros_like(h1)
    g2 = np.zeros_like(h2)
    loss = 0.0
    if len(positives):
        diff = h1[positives[:, 0]] - h2[positives[:, 1]]
        dist = np.linalg.norm(diff, axis=1)
        loss += float(dist.sum())
        unit = diff / np.maximum(dist, 1e-12)[:, None]
        np.add.at(g1, positives[:, 0], unit)
        np.add.at(g2, positives[:, 1], -unit)
    if len(negatives):
        diff = h1[negatives[:, 0]] - h2[negatives[:, 1]]
        dist = np.linalg.norm(diff, axis=1)
        slack = margin - dist
        active = slack > 0
        loss += balance * float(slack[active].sum())
        if np.any(active):
            unit = diff[active] / np.maximum(dist[active], 1e-12)[:, None]
            np.add.at(g1, negatives[active, 0], -balance * unit)
            np.add.at(g2, negatives[active, 1], balance * unit)
    return loss, g1, g2


def generate_negatives(
    positives: Sequence[tuple[int, int]],
    candidates1: np.ndarray,
    candidates2: np.ndarray,
    n_neg: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, bool]:
    """Corrupt each positive n_neg times per side, never reproducing it.

    Corruptions are sampled without replacement from the candidate scope
    minus the positive's own member; a scope too small for that falls back
    to sampling with replacement and sets the flag.
    """
    if candidates1.size == 0 or candidates2.size == 0:
        raise DomainError("candidate scopes must be nonempty")
    rows = []
    flagged = False
    for e1, e2 in positives:
        for scope, fixed, corrupt_left in ((candidates1, int(e1), True), (candidates2, int(e2), False)):
            allowed = scope[scope != fixed]
            if allowed.size >= n_neg:
                picks = rng.choice(allowed, size=n_neg, replace=False)
            elif allowed.size > 0:
                picks = rng.choice(allowed, size=n_neg, replace=True)
                flagged = True
            else:
                picks = rng.choice(scope, size=n_neg, replace=True)
                flagged = True
            for pick in picks:
                rows.append((int(pick), int(e2)) if corrupt_left else (int(e1), int(pick)))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 2), flagged


@dataclass
class FoldModel:
    """One trained encoder pair plus its training trace."""

    encoder1: GcnEncoder
    encoder2: GcnEncoder
    config: RecognizerConfig
    loss_history: list[float] = field(default_factory=list)
    negatives_with_replacement: bool = False


def _twin_encoders(
    n1: int, n2: int, cfg: RecognizerConfig, rng: np.random.Generator
) -> tuple[GcnEncoder, GcnEncoder]:
    """Encoder pair with separate node features but identical initial weights.

    The two encoders stay independent parameters during training; starting
    their weight stacks from the same point makes the two sides of the
    contrastive objective evolve symmetrically, which is what lets alignment
    generalize from the labelled pairs to unlabelled counterparts.
    """
    enc1 = init_encoder(n1, cfg, rng)
    enc2 = init_encoder(n2, cfg, rng)
    for layer in range(1, cfg.layers + 1):
        enc2.params[f"V{layer}"] = enc1.params[f"V{layer}"].copy()
        enc2.params[f"b{layer}"] = enc1.params[f"b{layer}"].copy()
    return enc1, enc2


def train_fold(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    positives: Sequence[tuple[int, int]],
    cfg: RecognizerConfig,
    seed: int,
    candidates1: np.ndarray | None = None,
    candidates2: np.ndarray | None = None,
) -> FoldModel:
    """Fit one encoder pair on a fold's matchable pairs.

    Negative pairs are regenerated every epoch from the candidate scopes
    (defaults: all entities of each KG).
    """
    positives = np.asarray(sorted((int(a), int(b)) for a, b in positives), dtype=np.int64).reshape(-1, 2)
    if not len(positives):
        raise TrainingError("fold training requires at least one matchable pair")
    c1 = kg1.entity_ids if candidates1 is None else np.asarray(candidates1, dtype=np.int64)
    c2 = kg2.entity_ids if candidates2 is None else np.asarray(candidates2, dtype=np.int64)
    rng = np.random.default_rng([seed, 701])
    fold = FoldModel(*_twin_encoders(kg1.num_entities, kg2.num_entities, cfg, rng), cfg)
    opt = Adam(lr=cfg.lr)
    params = {f"1:{k}": v for k, v in fold.encoder1.params.items()}
    params.update({f"2:{k}": v for k, v in fold.encoder2.params.items()})
    for epoch in range(cfg.epochs):
        negatives, flagged = generate_negatives(positives, c1, c2, cfg.n_negatives, rng)
        fold.negatives_with_replacement |= flagged
        h1, cache1 = _forward(kg1, fold.encoder1)
        h2, cache2 = _forward(kg2, fold.encoder2)
        loss, g_h1, g_h2 = _contrastive_grad(h1, h2, positives, negatives, cfg.margin, cfg.balance)
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite recognizer loss at epoch {epoch}")
        grads = {f"1:{k}": v for k, v in _backward(fold.encoder1, cache1, g_h1).items()}
        grads.update({f"2:{k}": v for k, v in _backward(fold.encoder2, cache2, g_h2).items()})
        opt.step(params, grads)
        fold.loss_history.append(loss)
    return fold


def fold_scores(
    fold: FoldModel,
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    candidates1: Iterable[int],
    candidates2: Iterable[int],
) -> AcquisitionVector:
    """Best dot-product similarity of each KG1 candidate over KG2 candidates."""
    c1 = np.asarray(sorted(set(int(i) for i in candidates1)), dtype=np.int64)
    c2 = np.asarray(sorted(set(int(i) for i in candidates2)), dtype=np.int64)
    if c2.size == 0:
        raise DomainError("empty KG2 candidate set")
    if c1.size == 0:
        raise DomainError("empty KG1 candidate set")
    h1 = gcn_encode(kg1, fold.encoder1)
    h2 = gcn_encode(kg2, fold.encoder2)
    sims = h1[c1] @ h2[c2].T
    # Scores leave the single-precision training domain as float64 so that
    # threshold search and downstream averaging are exact.
    return AcquisitionVector(c1, sims.max(axis=1).astype(np.float64))


def search_threshold(validations: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Grid-search the decision threshold over validation score midpoints.

    Candidates are the midpoints between consecutive distinct scores pooled
    across folds, plus -inf/+inf sentinels.  Returns the candidate whose
    mean micro-F1 across folds is maximal; ties go to the smaller value.
    """
    if not validations:
        raise ConfigError("threshold search needs at least one validation split")
    for scores, truth in validations:
        if np.asarray(scores).size == 0:
            raise ConfigError("empty validation split")
        if np.asarray(scores).shape != np.asarray(truth).shape:
            raise ConfigError("validation scores and labels must align")
    distinct = np.unique(np.concatenate([np.asarray(s, dtype=np.float64) for s, _ in validations]))
    candidates = np.concatenate([[-np.inf], (distinct[:-1] + distinct[1:]) / 2.0, [np.inf]])
    best_gamma, best_q = -np.inf, -1.0
    for gamma in candidates:
        q = float(
            np.mean([micro_f1((np.asarray(s) > gamma).astype(int), t) for s, t in validations])
        )
        if q > best_q:
            best_gamma, best_q = float(gamma), q
    return best_gamma


@dataclass
class RecognizerModel:
    """K trained folds sharing one decision threshold."""

    folds: list[FoldModel]
    gamma: float
    config: RecognizerConfig
    fallback_single_fold: bool = False
    validation_f1: float = 0.0


def _stratified_folds(
    pos_ids: list[int], neg_ids: list[int], k: int, rng: np.random.Generator
) -> list[tuple[list[int], list[int]]]:
    """K validation splits as (positive ids, bachelor ids), evenly stratified."""
    splits: list[tuple[list[int], list[int]]] = [([], []) for _ in range(k)]
    for ids, slot in ((pos_ids, 0), (neg_ids, 1)):
        order = rng.permutation(len(ids))
        for pos, idx in enumerate(order):
            splits[pos % k][slot].append(ids[idx])
    return [(sorted(p), sorted(n)) for p, n in splits]


def train_recognizer(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    labelled_pos: Mapping[int, int],
    labelled_neg: Iterable[int],
    cfg: RecognizerConfig,
    candidates2: np.ndarray | None = None,
) -> RecognizerModel:
    """K-fold training over all labelled entities plus threshold search.

    Labelled matchable pairs drive the contrastive objective; labelled
    bachelors participate only through validation (threshold search).  When
    there are fewer labelled items than folds, falls back to a single fold
    with a stratified 80/20 train/validation split (flagged on the model).
    """
    pos_ids = sorted(int(e) for e in labelled_pos)
    neg_ids = sorted(int(e) for e in labelled_neg)
    if not pos_ids:
        raise TrainingError("recognizer training requires at least one matchable annotation")
    c2 = kg2.entity_ids if candidates2 is None else np.asarray(sorted(set(map(int, candidates2))), dtype=np.int64)
    rng = np.random.default_rng([cfg.seed, 977])
    fallback = len(pos_ids) + len(neg_ids) < cfg.k_folds
    if fallback or cfg.k_folds == 1:
        # single fold: stratified 80/20 split, training keeps >= 1 positive
        pos_perm = [pos_ids[i] for i in rng.permutation(len(pos_ids))]
        neg_perm = [neg_ids[i] for i in rng.permutation(len(neg_ids))]
        n_val_pos = max(1, len(pos_perm) // 5) if len(pos_perm) >= 2 else 0
        n_val_neg = max(1, len(neg_perm) // 5) if neg_perm else 0
        splits = [(sorted(pos_perm[:n_val_pos]), sorted(neg_perm[:n_val_neg]))]
        if not (splits[0][0] or splits[0][1]):
            raise ConfigError("not enough labelled items for a validation split")
    else:
        splits = _stratified_folds(pos_ids, neg_ids, cfg.k_folds, rng)

    folds: list[FoldModel] = []
    validations: list[tuple[np.ndarray, np.ndarray]] = []
    for k, (val_pos, val_neg) in enumerate(splits):
        train_pairs = [(e1, labelled_pos[e1]) for e1 in pos_ids if e1 not in set(val_pos)]
        fold = train_fold(kg1, kg2, train_pairs, cfg, seed=cfg.seed * 100003 + k, candidates2=c2)
        val_ids = sorted(val_pos) + sorted(val_neg)
        if val_ids:
            scores = fold_scores(fold, kg1, kg2, val_ids, c2)
            truth = np.asarray([1 if e in set(val_pos) else 0 for e in scores.ids.tolist()])
            validations.append((scores.values, truth))
        folds.append(fold)
    gamma = search_threshold(validations)
    model = RecognizerModel(folds, gamma, cfg, fallback_single_fold=fallback)
    model.validation_f1 = float(
        np.mean([micro_f1((s > gamma).astype(int), t) for s, t in validations])
    )
    return model


def ensemble_scores(
    model: RecognizerModel,
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    candidates1: Iterable[int],
    candidates2: Iterable[int],
) -> AcquisitionVector:
    """Arithmetic mean of the K fold scores."""
    per_fold = [fold_scores(f, kg1, kg2, candidates1, candidates2) for f in model.folds]
    mean = np.mean([v.values for v in per_fold], axis=0)
    return AcquisitionVector(per_fold[0].ids, mean)


def ensemble_predict(
    model: RecognizerModel,
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    candidates1: Iterable[int],
    candidates2: Iterable[int],
) -> AcquisitionVector:
    """Binary matchable decision: 1 where the mean score exceeds the threshold."""
    scores = ensemble_scores(model, kg1, kg2, candidates1, candidates2)
    return AcquisitionVector(
        scores.ids, (scores.values > model.gamma).astype(np.float64), {"threshold": model.gamma}
    )


def save_recognizer(model: RecognizerModel, path: str | Path) -> None:
    meta = {
        "version": RECOGNIZER_CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "gamma": repr(model.gamma),
        "k": len(model.folds),
        "fallback_single_fold": model.fallback_single_fold,
        "validation_f1": model.validation_f1,
    }
    arrays = {}
    for i, fold in enumerate(model.folds):
        for side, enc in (("1", fold.encoder1), ("2", fold.encoder2)):
            for key, val in enc.params.items():
                arrays[f"f{i}:{side}:{key}"] = val
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_recognizer(path: str | Path) -> RecognizerModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != RECOGNIZER_CHECKPOINT_VERSION:
            raise DomainError(f"unsupported recognizer checkpoint version: {meta.get('version')}")
        cfg = RecognizerConfig(**meta["config"])
        folds = []
        for i in range(meta["k"]):
            encoders = []
            for side in ("1", "2"):
                prefix = f"f{i}:{side}:"
                params = {
                    key[len(prefix):]: data[key].copy() for key in data.files if key.startswith(prefix)
                }
                encoders.append(GcnEncoder(params, cfg.layers))
            folds.append(FoldModel(encoders[0], encoders[1], cfg))
        model = RecognizerModel(folds, float(meta["gamma"]), cfg, meta["fallback_single_fold"])
        model.validation_f1 = meta["validation_f1"]
        return model
