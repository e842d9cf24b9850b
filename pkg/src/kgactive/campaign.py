"""Budgeted annotation campaigns over an entity-alignment pool.

One campaign iteration scores the unlabelled pool with the configured
sampling strategy, selects a batch, queries the oracle, folds the answers
into the label bookkeeping, refreshes the embedding model, and evaluates.
The loop stops when the query budget is spent or the pool is empty.

Every source of randomness is seeded through the config, so a rerun with
identical inputs reproduces the log byte for byte (timing fields aside).
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import ea_model
from .dataset import AlignmentStore, KnowledgeGraph
from .errors import (
    ConfigError,
    ConflictError,
    DomainError,
    OneToOneViolationError,
    TrainingError,
    UnknownQueryError,
)
from .evaluation import LearningCurve, micro_f1
from .influence import StructUncertaintyConfig, build_influence_matrix, structure_aware_uncertainty
from .recognizer import RecognizerConfig, ensemble_predict, train_recognizer
from .topology import betweenness_scores, degree_scores, pagerank_scores
from .uncertainty import (
    bald,
    entropy_uncertainty,
    least_confidence,
    margin_uncertainty,
    scores_to_probs,
    smallest_margin,
    std_dev_uncertainty,
)
from .vectors import AcquisitionVector

STRATEGIES = (
    "rand",
    "degree",
    "pagerank",
    "betweenness",
    "uncertainty",
    "entropy",
    "least_conf",
    "margin_prob",
    "bald",
    "stddev",
    "struct_uncert",
    "active_ea",
)

_BAYESIAN = {"bald", "stddev"}


@dataclass
class CampaignConfig:
    """Everything a campaign needs besides the dataset itself."""

    strategy: str
    budget: int
    batch_size: int = 100
    alpha: float = 0.1
    pi_eps: float = 1e-6
    pi_max_iters: int = 1000
    use_recognizer: bool = True
    recognizer: RecognizerConfig = field(default_factory=RecognizerConfig)
    model: ea_model.TrainConfig = field(default_factory=ea_model.TrainConfig)
    mc_samples: int = 20
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; valid strategies: {', '.join(STRATEGIES)}"
            )
        if self.budget <= 0:
            raise ConfigError(f"budget must be positive, got {self.budget}")
        if not 0 < self.batch_size <= self.budget:
            raise ConfigError(
                f"batch size must satisfy 0 < N <= budget, got N={self.batch_size} B={self.budget}"
            )
        if self.mc_samples < 2:
            raise ConfigError(f"need at least two stochastic samples, got {self.mc_samples}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")

    def struct_config(self) -> StructUncertaintyConfig:
        return StructUncertaintyConfig(alpha=self.alpha, eps=self.pi_eps, max_iters=self.pi_max_iters)


@dataclass(frozen=True)
class OracleAnswer:
    """One annotator verdict: either the counterpart id or a bachelor call."""

    entity: int
    counterpart: int | None

    @property
    def is_bachelor(self) -> bool:
        return self.counterpart is None

    def as_dict(self) -> dict:
        return {
            "entity": int(self.entity),
            "outcome": "bachelor" if self.is_bachelor else "match",
            "counterpart": None if self.counterpart is None else int(self.counterpart),
        }


class SimulatedOracle:
    """Answers queries from the gold alignment and audits every access."""

    def __init__(self, store: AlignmentStore):
        self._gold = dict(store.gold)
        self._n1 = store.n1
        self.accesses = 0

    def answer(self, queries: Iterable[int]) -> list[OracleAnswer]:
        out = []
        for q in queries:
            q = int(q)
            if not 0 <= q < self._n1:
                raise DomainError(f"query {q} is outside the source entity range [0, {self._n1})")
            self.accesses += 1
            out.append(OracleAnswer(q, self._gold.get(q)))
        return out


def final_acquisition(f_su: AcquisitionVector, f_b: AcquisitionVector) -> AcquisitionVector:
    """Elementwise product of the structural and bachelor-filter signals."""
    if not np.array_equal(f_su.ids, f_b.ids):
        raise DomainError("acquisition factors must cover the same candidates")
    return f_su.multiply(f_b)


def select_batch(scores: AcquisitionVector, pool: Iterable[int], n: int) -> list[int]:
    """Top-``n`` pool entities by score, ties broken by ascending entity id."""
    pool_ids = sorted(int(p) for p in pool)
    if not pool_ids:
        raise DomainError("cannot select from an empty pool")
    if n <= 0:
        raise DomainError(f"batch size must be positive, got {n}")
    restricted = scores.restrict(pool_ids)
    # Stable mergesort on descending value keeps ascending-id order within ties.
    order = np.argsort(-restricted.values, kind="stable")
    take = min(n, len(pool_ids))
    return [int(restricted.ids[i]) for i in order[:take]]


def _ranked(scores: AcquisitionVector) -> AcquisitionVector:
    if scores.meta.get("select_smallest"):
        return scores.negate()
    return scores


class _Scorer:
    """Computes the per-iteration acquisition vector for every strategy."""

    def __init__(self, kg1: KnowledgeGraph, kg2: KnowledgeGraph, config: CampaignConfig):
        self.kg1 = kg1
        self.kg2 = kg2
        self.config = config
        self.recognizer_config = replace(
            config.recognizer, seed=config.recognizer.seed + 7919 * config.seed
        )
        self._static: dict[str, AcquisitionVector] = {}
        self._influence = None

    def _static_scores(self, name: str) -> AcquisitionVector:
        if name not in self._static:
            fn = {"degree": degree_scores, "pagerank": pagerank_scores, "betweenness": betweenness_scores}[name]
            self._static[name] = fn(self.kg1)
        return self._static[name]

    def _influence_matrix(self):
        if self._influence is None:
            self._influence = build_influence_matrix(self.kg1)
        return self._influence

    def _margin_over_all(self, model: ea_model.EmbeddingModel, targets: Sequence[int]) -> AcquisitionVector:
        matrix = ea_model.score_matrix(model, range(self.kg1.num_entities), targets)
        return margin_uncertainty(matrix)

    def _struct(self, model: ea_model.EmbeddingModel, targets: Sequence[int]) -> tuple[AcquisitionVector, dict]:
        raw = self._margin_over_all(model, targets)
        vec = structure_aware_uncertainty(self._influence_matrix(), raw, self.config.struct_config())
        return vec, {k: vec.meta[k] for k in ("converged", "iterations") if k in vec.meta}

    def _bachelor_filter(self, store: AlignmentStore) -> tuple[AcquisitionVector, dict, object]:
        """Recognizer-backed 0/1 filter over all source entities.

        Falls back to an all-ones vector (flagged) when the labelled set
        cannot support training yet, e.g. before any positive label exists.
        """
        all_ids = np.arange(self.kg1.num_entities)
        if not self.config.use_recognizer:
            return AcquisitionVector(all_ids, np.ones(len(all_ids))), {"recognizer": "disabled"}, None
        try:
            model = train_recognizer(
                self.kg1,
                self.kg2,
                dict(store.labelled_pos),
                set(store.labelled_neg),
                self.recognizer_config,
            )
        except (TrainingError, ConfigError) as exc:
            flags = {"recognizer": "skipped", "recognizer_skip_reason": str(exc)}
            return AcquisitionVector(all_ids, np.ones(len(all_ids))), flags, None
        preds = ensemble_predict(model, self.kg1, self.kg2, all_ids, self.kg2.entity_ids)
        return AcquisitionVector(all_ids, preds.values.astype(float)), {"recognizer": "trained"}, model

    def score(
        self,
        strategy: str,
        model: ea_model.EmbeddingModel,
        store: AlignmentStore,
        iteration: int,
        rng: np.random.Generator,
    ) -> tuple[AcquisitionVector, dict, object]:
        """Returns (scores over all source entities, flags, recognizer or None)."""
        targets = sorted(set(range(self.kg2.num_entities)) - store.consumed2)
        if not targets:
            raise DomainError("no unconsumed target entities remain to score against")
        flags: dict = {}
        recognizer = None
        if strategy == "rand":
            scores = AcquisitionVector(np.arange(self.kg1.num_entities), rng.random(self.kg1.num_entities))
        elif strategy in ("degree", "pagerank", "betweenness"):
            scores = self._static_scores(strategy)
        elif strategy == "uncertainty":
            scores = self._margin_over_all(model, targets)
        elif strategy in ("entropy", "least_conf", "margin_prob"):
            probs = scores_to_probs(ea_model.score_matrix(model, range(self.kg1.num_entities), targets))
            fn = {
                "entropy": entropy_uncertainty,
                "least_conf": least_confidence,
                "margin_prob": smallest_margin,
            }[strategy]
            scores = _ranked(fn(probs))
        elif strategy in _BAYESIAN:
            samples = ea_model.mc_score_samples(
                model,
                range(self.kg1.num_entities),
                targets,
                self.config.mc_samples,
                seed=(self.config.seed, 211, iteration),
            )
            prob_samples = [scores_to_probs(s) for s in samples]
            scores = bald(prob_samples) if strategy == "bald" else std_dev_uncertainty(prob_samples)
        elif strategy == "struct_uncert":
            scores, flags = self._struct(model, targets)
        elif strategy == "active_ea":
            f_su, flags = self._struct(model, targets)
            f_b, rec_flags, recognizer = self._bachelor_filter(store)
            flags = {**flags, **rec_flags}
            scores = final_acquisition(f_su, f_b)
            # A filter that vetoes the whole remaining pool ranks nothing;
            # fall back to the unfiltered structural signal (and flag it)
            # instead of selecting arbitrarily from an all-zero vector.
            pool_scores = scores.restrict(sorted(store.pool))
            if not np.any(pool_scores.values > 0):
                scores = f_su
                flags["filter_fallback"] = "pool_fully_vetoed"
        else:  # pragma: no cover - guarded by CampaignConfig validation
            raise ConfigError(f"unknown strategy {strategy!r}")
        return scores, flags, recognizer


@dataclass
class CampaignLog:
    """Per-iteration records plus the resolved configuration."""

    config: dict
    records: list[dict] = field(default_factory=list)

    def curve(self) -> LearningCurve:
        xs, ys = [], []
        for rec in self.records:
            if rec["hit_at_1"] is not None:
                xs.append(rec["proportion"])
                ys.append(rec["hit_at_1"])
        if len(xs) < 2:
            raise DomainError("campaign produced fewer than two evaluated checkpoints")
        return LearningCurve(np.asarray(xs), np.asarray(ys))

    def _record_for_export(self, rec: dict, timing: bool) -> dict:
        if timing:
            return rec
        return {k: v for k, v in rec.items() if k != "wall_time"}

    def to_jsonl(self, path: str | Path, timing: bool = True) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8") as fh:
            fh.write(json.dumps({"config": self.config}, sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(self._record_for_export(rec, timing), sort_keys=True) + "\n")

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["proportion", "hit_at_1", "recognizer_micro_f1"])
            for rec in self.records:
                writer.writerow(
                    [
                        f"{rec['proportion']:.6f}",
                        "" if rec["hit_at_1"] is None else f"{rec['hit_at_1']:.6f}",
                        "" if rec["recognizer_micro_f1"] is None else f"{rec['recognizer_micro_f1']:.6f}",
                    ]
                )


def _resolved_config(config: CampaignConfig) -> dict:
    out = asdict(config)
    return out


class CampaignState:
    """Mutable campaign position: bookkeeping, model, rng, spent budget.

    The campaign seed perturbs the model and recognizer seeds, so running
    the same configuration under different campaign seeds varies every
    random component end to end while staying reproducible per seed.
    """

    def __init__(
        self,
        kg1: KnowledgeGraph,
        kg2: KnowledgeGraph,
        store: AlignmentStore,
        config: CampaignConfig,
    ):
        if config.budget > store.n1:
            raise ConfigError(
                f"budget {config.budget} exceeds the number of source entities {store.n1}"
            )
        self.kg1 = kg1
        self.kg2 = kg2
        self.store = store.copy()
        self.config = config
        self.model_config = replace(config.model, seed=config.model.seed + 7919 * config.seed)
        self.scorer = _Scorer(kg1, kg2, config)
        self.oracle = SimulatedOracle(store)
        self.rng = np.random.default_rng([config.seed, 977])
        self.model = ea_model.init_model(kg1, kg2, self.model_config)
        self.iteration = 0
        self.spent = 0
        self.log = CampaignLog(config=_resolved_config(config))

    @property
    def remaining(self) -> int:
        return self.config.budget - self.spent

    @property
    def done(self) -> bool:
        return self.remaining <= 0 or not self.store.pool

    def next_batch(self) -> tuple[list[int], AcquisitionVector, dict, object]:
        scores, flags, recognizer = self.scorer.score(
            self.config.strategy, self.model, self.store, self.iteration + 1, self.rng
        )
        batch = select_batch(scores, self.store.pool, min(self.config.batch_size, self.remaining))
        return batch, scores, flags, recognizer

    def apply_answers(self, answers: Sequence[OracleAnswer]) -> None:
        for ans in answers:
            if ans.is_bachelor:
                self.store.label_bachelor(ans.entity)
            else:
                self.store.label_match(ans.entity, ans.counterpart)
        self.spent += len(answers)

    def retrain(self) -> None:
        pairs = sorted(self.store.labelled_pos.items())
        self.model = ea_model.train(self.kg1, self.kg2, pairs, self.model_config, init=self.model)

    def evaluate(self, recognizer, scores: AcquisitionVector, batch: list[int], flags: dict, answers) -> dict:
        test = self.store.test_pairs
        evaluate_now = (self.iteration % self.config.eval_every == 0) or self.done
        hit = ea_model.hit_at_1(self.model, test) if (test and evaluate_now) else None
        rec_f1 = None
        if recognizer is not None and self.store.pool:
            pool_ids = sorted(self.store.pool)
            preds = ensemble_predict(recognizer, self.kg1, self.kg2, pool_ids, self.kg2.entity_ids)
            truth = np.array([1 if e in self.store.gold else 0 for e in pool_ids])
            rec_f1 = micro_f1(preds.values, truth)
        record = {
            "iteration": self.iteration,
            "selected": [int(b) for b in batch],
            "scores": {str(int(b)): float(scores.value_of(b)) for b in batch},
            "answers": [a.as_dict() for a in answers],
            "spent": self.spent,
            "proportion": self.spent / self.store.n1,
            "labelled_pos": len(self.store.labelled_pos),
            "labelled_neg": len(self.store.labelled_neg),
            "pool_size": len(self.store.pool),
            "test_size": len(test),
            "hit_at_1": hit,
            "recognizer_micro_f1": rec_f1,
            "oracle_accesses": self.oracle.accesses,
            "flags": flags,
            "campaign_complete": self.done,
            "wall_time": time.time(),
        }
        self.log.records.append(record)
        return record

    def run_iteration(self) -> dict:
        """One full cycle: score, select, query, update, retrain, evaluate."""
        if self.done:
            raise DomainError("campaign already complete")
        batch, scores, flags, recognizer = self.next_batch()
        answers = self.oracle.answer(batch)
        self.iteration += 1
        self.apply_answers(answers)
        self.retrain()
        return self.evaluate(recognizer, scores, batch, flags, answers)

    # -- snapshots ---------------------------------------------------------

    def snapshot(self, directory: str | Path) -> None:
        """Writes a resumable state capture; called only between iterations."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ea_model.save_checkpoint(self.model, directory / "model.npz")
        state = {
            "config": _resolved_config(self.config),
            "iteration": self.iteration,
            "spent": self.spent,
            "oracle_accesses": self.oracle.accesses,
            "labelled_pos": {str(k): int(v) for k, v in sorted(self.store.labelled_pos.items())},
            "labelled_neg": sorted(int(e) for e in self.store.labelled_neg),
            "rng_state": self.rng.bit_generator.state,
            "records": self.log.records,
            "model_checkpoint": "model.npz",
        }
        tmp = directory / "state.json.tmp"
        tmp.write_text(json.dumps(state, sort_keys=True), encoding="utf-8")
        tmp.replace(directory / "state.json")

    @classmethod
    def resume(
        cls,
        kg1: KnowledgeGraph,
        kg2: KnowledgeGraph,
        store: AlignmentStore,
        directory: str | Path,
    ) -> "CampaignState":
        directory = Path(directory)
        raw = json.loads((directory / "state.json").read_text(encoding="utf-8"))
        cfg_dict = dict(raw["config"])
        cfg_dict["recognizer"] = RecognizerConfig(**cfg_dict["recognizer"])
        cfg_dict["model"] = ea_model.TrainConfig(**cfg_dict["model"])
        config = CampaignConfig(**cfg_dict)
        state = cls(kg1, kg2, store, config)
        for e1, e2 in sorted((int(k), int(v)) for k, v in raw["labelled_pos"].items()):
            state.store.label_match(e1, e2)
        for e1 in raw["labelled_neg"]:
            state.store.label_bachelor(int(e1))
        state.iteration = raw["iteration"]
        state.spent = raw["spent"]
        state.oracle.accesses = raw["oracle_accesses"]
        state.rng.bit_generator.state = raw["rng_state"]
        state.model = ea_model.load_checkpoint(directory / raw["model_checkpoint"])
        state.log.records = list(raw["records"])
        return state


class InteractiveSession:
    """Campaign driven by an external annotator instead of the gold oracle.

    The session proposes one batch at a time; answers arrive one by one via
    :meth:`submit` and are applied together when the batch completes.  A run
    fed the same answers the simulated oracle would give produces the same
    log records (timing aside).
    """

    def __init__(
        self,
        kg1: KnowledgeGraph,
        kg2: KnowledgeGraph,
        store: AlignmentStore,
        config: CampaignConfig,
        snapshot_dir: str | Path | None = None,
    ):
        self.state = CampaignState(kg1, kg2, store, config)
        self.snapshot_dir = snapshot_dir
        self.pending: list[int] = []
        self.answers: dict[int, int | None] = {}
        self._pending_scores: AcquisitionVector | None = None
        self._pending_flags: dict = {}
        self._pending_recognizer = None
        self._begin_batch()

    @classmethod
    def resume(
        cls,
        kg1: KnowledgeGraph,
        kg2: KnowledgeGraph,
        store: AlignmentStore,
        snapshot_dir: str | Path,
    ) -> "InteractiveSession":
        session = cls.__new__(cls)
        session.state = CampaignState.resume(kg1, kg2, store, snapshot_dir)
        session.snapshot_dir = snapshot_dir
        session.pending = []
        session.answers = {}
        session._pending_scores = None
        session._pending_flags = {}
        session._pending_recognizer = None
        session._begin_batch()
        return session

    def _begin_batch(self) -> None:
        self.answers = {}
        if self.state.done:
            self.pending = []
            self._pending_scores = None
            self._pending_flags = {}
            self._pending_recognizer = None
            return
        batch, scores, flags, recognizer = self.state.next_batch()
        self.pending = batch
        self._pending_scores = scores
        self._pending_flags = flags
        self._pending_recognizer = recognizer

    @property
    def complete(self) -> bool:
        return self.state.done

    @property
    def batch_answered(self) -> bool:
        return bool(self.pending) and len(self.answers) == len(self.pending)

    def pending_score_of(self, e1: int) -> float:
        if self._pending_scores is None:
            raise DomainError("no pending batch")
        return float(self._pending_scores.value_of(e1))

    def submit(self, e1: int, counterpart: int | None) -> str:
        """Records one answer; returns ``"recorded"`` or ``"duplicate"``.

        Duplicate submissions of the same (query, outcome) are no-ops; a
        different outcome for an already-answered query is a conflict.
        """
        e1 = int(e1)
        if e1 not in self.pending:
            raise UnknownQueryError(f"entity {e1} is not part of the pending batch")
        if counterpart is not None:
            counterpart = int(counterpart)
            if not 0 <= counterpart < self.state.store.n2:
                raise DomainError(f"counterpart {counterpart} is outside the target entity range")
            taken = self.state.store.consumed2 | {
                c for q, c in self.answers.items() if c is not None and q != e1
            }
            if counterpart in taken:
                raise OneToOneViolationError(
                    f"target entity {counterpart} is already matched to another query"
                )
        if e1 in self.answers:
            if self.answers[e1] == counterpart:
                return "duplicate"
            raise ConflictError(
                f"query {e1} already answered with a different outcome"
            )
        self.answers[e1] = counterpart
        return "recorded"

    def advance(self, force: bool = False) -> dict:
        """Applies the collected answers and moves to the next batch.

        Without ``force`` the batch must be fully answered.  A forced
        partial advance applies only the answered subset (unanswered
        queries stay in the pool) and is flagged in the log record.
        """
        if not self.pending:
            raise DomainError("campaign already complete")
        if not force and not self.batch_answered:
            raise DomainError(
                f"batch incomplete: {len(self.answers)} of {len(self.pending)} answered"
            )
        batch = [e for e in self.pending if e in self.answers]
        answers = [OracleAnswer(e, self.answers[e]) for e in batch]
        self.state.oracle.accesses += len(answers)
        self.state.iteration += 1
        self.state.apply_answers(answers)
        self.state.retrain()
        flags = dict(self._pending_flags)
        if len(batch) < len(self.pending):
            flags["force_advanced"] = True
        record = self.state.evaluate(
            self._pending_recognizer, self._pending_scores, batch, flags, answers
        )
        if self.snapshot_dir is not None:
            self.state.snapshot(self.snapshot_dir)
        self._begin_batch()
        return record


def run_campaign(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    store: AlignmentStore,
    config: CampaignConfig,
    snapshot_dir: str | Path | None = None,
) -> CampaignLog:
    """Runs a simulated campaign to budget exhaustion and returns its log."""
    state = CampaignState(kg1, kg2, store, config)
    while not state.done:
        state.run_iteration()
        if snapshot_dir is not None:
            state.snapshot(snapshot_dir)
    return state.log


def resume_campaign(
    kg1: KnowledgeGraph,
    kg2: KnowledgeGraph,
    store: AlignmentStore,
    snapshot_dir: str | Path,
) -> CampaignLog:
    """Continues a snapshotted campaign until completion."""
    state = CampaignState.resume(kg1, kg2, store, snapshot_dir)
    while not state.done:
        state.run_iteration()
        state.snapshot(snapshot_dir)
    return state.log
