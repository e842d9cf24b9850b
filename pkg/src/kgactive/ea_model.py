"""Self-contained embedding model for entity alignment.

A translation-style model: triples are scored by -||h + r - t|| within each
KG, and labelled alignment pairs pull the two entity spaces together.  The
matching score between entities of different KGs is the negative Euclidean
distance of their embeddings, so larger is better and top-2 margins are
plain real numbers.

Gradients are computed by hand (numpy) which keeps training bitwise
deterministic under a seed and lets tests check them against finite
differences.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._optim import Adam
from .dataset import KnowledgeGraph
from .errors import ConfigError, DomainError, TrainingError
from .vectors import ScoreMatrix

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 32
    epochs: int = 40
    lr: float = 0.02
    margin: float = 1.0
    align_margin: float = 2.0
    n_negatives: int = 2
    triple_weight: float = 1.0
    align_weight: float = 5.0
    batch_size: int = 1024
    dropout: float = 0.0
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        if self.dim < 1 or self.epochs < 0 or self.n_negatives < 1 or self.batch_size < 1:
            raise ConfigError("dim, n_negatives and batch_size must be positive; epochs nonnegative")
        if self.lr <= 0 or self.margin < 0 or self.align_margin < 0:
            raise ConfigError("lr must be positive and margins nonnegative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")


@dataclass
class EmbeddingModel:
    """Entity and relation embeddings for both KGs plus the training config."""

    ent1: np.ndarray
    ent2: np.ndarray
    rel1: np.ndarray
    rel2: np.ndarray
    config: TrainConfig

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(
            self.ent1.copy(), self.ent2.copy(), self.rel1.copy(), self.rel2.copy(), self.config
        )


def _normalize_rows(mat: np.ndarray) -> None:
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    np.divide(mat, norms, out=mat, where=norms > 0)


def init_model(kg1: KnowledgeGraph, kg2: KnowledgeGraph, config: TrainConfig) -> EmbeddingModel:
    """Seeded uniform init with unit-norm rows (classic translation-model setup)."""
    rng = np.random.default_rng(config.seed)
    bound = 6.0 / np.sqrt(config.dim)

    def draw(n: int) -> np.ndarray:
        mat = rng.uniform(-bound, bound, size=(n, config.dim))
        _normalize_rows(mat)
        return mat

    return EmbeddingModel(
        draw(kg1.num_entities),
        draw(kg2.num_entities),
        draw(max(kg1.num_relations, 1)),
        draw(max(kg2.num_relations, 1)),
        config,
    )


def triple_loss_and_grad(
    ent: np.ndarray,
    rel: np.ndarray,
    pos: np.ndarray,
    neg: np.ndarray,
    margin: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Margin ranking loss over aligned positive/negative triple batches.

    loss = sum max(0, margin + ||h+r-t|| - ||h'+r'-t'||) with L2 norms.
    Returns (loss, grad_ent, grad_rel).
    """
    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    v_pos = ent[pos[:, 0]] + rel[pos[:, 1]] - ent[pos[:, 2]]
    v_neg = ent[neg[:, 0]] + rel[neg[:, 1]] - ent[neg[:, 2]]
    d_pos = np.linalg.norm(v_pos, axis=1)
    d_neg = np.linalg.norm(v_neg, axis=1)
    slack = margin + d_pos - d_neg
    active = slack > 0
    loss = float(slack[active].sum())
    if np.any(active):
        u_pos = v_pos[active] / np.maximum(d_pos[active], 1e-12)[:, None]
        u_neg = v_neg[active] / np.maximum(d_neg[active], 1e-12)[:, None]
        ap, an = pos[active], neg[active]
        np.add.at(g_ent, ap[:, 0], u_pos)
        np.add.at(g_ent, ap[:, 2], -u_pos)
        np.add.at(g_rel, ap[:, 1], u_pos)
        np.add.at(g_ent, an[:, 0], -u_neg)
        np.add.at(g_ent, an[:, 2], u_neg)
        np.add.at(g_rel, an[:, 1], -u_neg)
    return loss, g_ent, g_rel


def alignment_loss_and_grad(
    ent1: np.ndarray,
    ent2: np.ndarray,
    pairs: np.ndarray,
    neg_pairs: np.ndarray,
    margin: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Pull labelled pairs together, push sampled negatives beyond the margin.

    loss = sum ||x1_i - x2_j|| + sum max(0, margin - ||x1_i' - x2_j'||).
    Returns (loss, grad_ent1, grad_ent2).
    """
    g1 = np.zeros_like(ent1)
    g2 = np.zeros_like(ent2)
    loss = 0.0
    if pairs.size:
        diff = ent1[pairs[:, 0]] - ent2[pairs[:, 1]]
        dist = np.linalg.norm(diff, axis=1)
        loss += float(dist.sum())
        unit = diff / np.maximum(dist, 1e-12)[:, None]
        np.add.at(g1, pairs[:, 0], unit)
        np.add.at(g2, pairs[:, 1], -unit)
    if neg_pairs.size:
        diff = ent1[neg_pairs[:, 0]] - ent2[neg_pairs[:, 1]]
        dist = np.linalg.norm(diff, axis=1)
        slack = margin - dist
        active = slack > 0
        loss += float(slack[active].sum())
        if np.any(active):
            unit = diff[active] / np.maximum(dist[active], 1e-12)[:, None]
            np.add.at(g1, neg_pairs[active, 0], -unit)
            np.add.at(g2, neg_pairs[active, 1], unit)
    return loss, g1, g2


def _corrupt_triples(triples: np.ndarray, n_entities: int, n_neg: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Replicate each triple n_neg times and corrupt head or tail."""
    pos = np.repeat(triples, n_neg, axis=0)
    neg = pos.copy()
    corrupt_head = rng.random(len(neg)) < 0.5
    repl = rng.integers(0, n_entities, size=len(neg))
    slot = np.where(corrupt_head, 0, 2)
    original = neg[np.arange(len(neg)), slot]
    # avoid regenerating the positive triple
    repl = np.where(repl == original, (repl + 1) % n_entities, repl)
    neg[np.arange(len(neg)), slot] = repl
    return pos, neg


def _corrupt_pairs(pairs: np.ndarray, n1: int, n2: int, n_neg: int, rng: np.random.Generator) -> np.ndarray:
    """For each pair, n_neg corruptions per side, never equal to the source pair."""
    reps = np.repeat(pairs, n_neg, axis=0)
    left = reps.copy()
    lrepl = rng.integers(0, n1, size=len(left))
    lrepl = np.where(lrepl == left[:, 0], (lrepl + 1) % n1, lrepl)
    left[:, 0] = lrepl
    right = reps.copy()
    rrepl = rng.integers(0, n2, size=len(right))
    rrepl = np.where(rrepl == right[:, 1], (rrepl + 1) % n2, rrepl)
    right[:, 1] = rrepl
    return np.concatenate([left, right], axis=0)


def train(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    labelled_pos: Iterable[tuple[int, int]],
    config: TrainConfig,
    init: EmbeddingModel | None = None,
) -> EmbeddingModel:
    """Train the alignment model on both KGs' triples plus labelled pairs.

    With an empty ``labelled_pos`` the alignment term is skipped (cold
    start).  Entity rows are re-normalized after every epoch.  Fully
    deterministic under ``config.seed``.
    """
    model = init.copy() if init is not None else init_model(kg1, kg2, config)
    model.config = config
    if init is not None and (
        model.ent1.shape != (kg1.num_entities, config.dim)
        or model.ent2.shape != (kg2.num_entities, config.dim)
    ):
        raise DomainError("warm-start model does not match the graphs or dimension")
    pairs = np.asarray(sorted((int(a), int(b)) for a, b in labelled_pos), dtype=np.int64).reshape(-1, 2)
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(lr=config.lr)
    params = {"ent1": model.ent1, "ent2": model.ent2, "rel1": model.rel1, "rel2": model.rel2}

    for epoch in range(config.epochs):
        epoch_loss = 0.0
        for side, kg in (("1", kg1), ("2", kg2)):
            triples = kg.triples
            if not triples.size:
                continue
            order = rng.permutation(len(triples))
            for start in range(0, len(order), config.batch_size):
                batch = triples[order[start:start + config.batch_size]]
                pos, neg = _corrupt_triples(batch, kg.num_entities, config.n_negatives, rng)
                loss, g_ent, g_rel = triple_loss_and_grad(
                    params[f"ent{side}"], params[f"rel{side}"], pos, neg, config.margin
                )
                epoch_loss += config.triple_weight * loss
                opt.step(
                    params,
                    {f"ent{side}": config.triple_weight * g_ent, f"rel{side}": config.triple_weight * g_rel},
                )
        if pairs.size:
            negs = _corrupt_pairs(pairs, kg1.num_entities, kg2.num_entities, config.n_negatives, rng)
            loss, g1, g2 = alignment_loss_and_grad(
                params["ent1"], params["ent2"], pairs, negs, config.align_margin
            )
            epoch_loss += config.align_weight * loss
            opt.step(params, {"ent1": config.align_weight * g1, "ent2": config.align_weight * g2})
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        _normalize_rows(model.ent1)
        _normalize_rows(model.ent2)
    return model


def _ids_array(candidates: Iterable[int], n: int, side: str) -> np.ndarray:
    ids = np.asarray(sorted(set(int(c) for c in candidates)), dtype=np.int64)
    if ids.size == 0:
        raise DomainError(f"empty candidate set for KG{side}")
    if ids[0] < 0 or ids[-1] >= n:
        raise DomainError(f"candidate id out of range for KG{side}")
    return ids


def _pairwise_neg_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq = np.sum(a**2, axis=1)[:, None] + np.sum(b**2, axis=1)[None, :] - 2.0 * (a @ b.T)
    return -np.sqrt(np.maximum(sq, 0.0))


def score_matrix(
    model: EmbeddingModel,
    query_candidates: Iterable[int],
    target_candidates: Iterable[int],
) -> ScoreMatrix:
    """Matching scores F(e1, e2) = -||x1 - x2|| for the given candidate sets."""
    rows = _ids_array(query_candidates, model.ent1.shape[0], "1")
    cols = _ids_array(target_candidates, model.ent2.shape[0], "2")
    return ScoreMatrix(rows, cols, _pairwise_neg_distance(model.ent1[rows], model.ent2[cols]))


def mc_score_samples(
    model: EmbeddingModel,
    query_candidates: Iterable[int],
    target_candidates: Iterable[int],
    n_samples: int,
    seed: int,
) -> list[ScoreMatrix]:
    """Stochastic scorings with fresh dropout masks on embedding coordinates.

    Inverted-dropout scaling keeps the expectation at the deterministic
    scores, so samples converge to ``score_matrix`` as dropout tends to 0.
    """
    if model.config.dropout <= 0:
        raise ConfigError("stochastic mode disabled: model dropout rate is 0")
    if n_samples < 2:
        raise DomainError("need at least two stochastic samples")
    rows = _ids_array(query_candidates, model.ent1.shape[0], "1")
    cols = _ids_array(target_candidates, model.ent2.shape[0], "2")
    a, b = model.ent1[rows], model.ent2[cols]
    keep = 1.0 - model.config.dropout
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        mask_a = (rng.random(a.shape) < keep) / keep
        mask_b = (rng.random(b.shape) < keep) / keep
        out.append(ScoreMatrix(rows, cols, _pairwise_neg_distance(a * mask_a, b * mask_b)))
    return out


def hit_at_1(model: EmbeddingModel, test_pairs: Sequence[tuple[int, int]]) -> float:
    """Share of test entities whose gold counterpart wins its score row.

    Candidates are the test-side KG2 entities; argmax ties go to the lowest
    entity id, and count as a hit only when that winner is the gold one.
    """
    if not len(test_pairs):
        raise DomainError("empty test set")
    pairs = np.asarray(test_pairs, dtype=np.int64).reshape(-1, 2)
    cols = np.unique(pairs[:, 1])
    rows = np.unique(pairs[:, 0])
    matrix = score_matrix(model, rows, cols)
    gold_col = {int(a): int(b) for a, b in pairs}
    hits = 0
    for i, e1 in enumerate(matrix.row_ids):
        winner = matrix.col_ids[int(np.argmax(matrix.values[i]))]
        if int(winner) == gold_col[int(e1)]:
            hits += 1
    return hits / len(rows)


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    """Write a versioned npz container with a JSON header and the matrices."""
    meta = {"version": CHECKPOINT_VERSION, "config": asdict(model.config)}
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        ent1=model.ent1,
        ent2=model.ent2,
        rel1=model.rel1,
        rel2=model.rel2,
    )


def load_checkpoint(path: str | Path) -> EmbeddingModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DomainError(f"unsupported checkpoint version: {meta.get('version')}")
        config = TrainConfig(**meta["config"])
        return EmbeddingModel(
            data["ent1"].copy(), data["ent2"].copy(), data["rel1"].copy(), data["rel2"].copy(), config
        )
