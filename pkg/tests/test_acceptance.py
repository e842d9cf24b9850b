"""End-to-end acceptance gates for the active-alignment engine.

Each test prints one visible PASS/FAIL line with the measured quantity so a
full run doubles as a scorecard.  Tolerances and workloads are part of the
contract; the two end-to-end gates also enforce wall-clock budgets.
"""
from __future__ import annotations

import time

import numpy as np
import pytest

from conftest import random_digraph
from oracles import (
    best_threshold_exhaustive,
    finite_difference_gradient,
    influence_dense,
    riemann_auc,
    solve_influence_fixed_point,
)

from kgactive import ea_model
from kgactive.campaign import CampaignConfig, run_campaign
from kgactive.evaluation import LearningCurve, auc_at, micro_f1
from kgactive.influence import (
    StructUncertaintyConfig,
    build_influence_matrix,
    structure_aware_uncertainty,
)
from kgactive.recognizer import (
    RecognizerConfig,
    RecognizerModel,
    contrastive_loss,
    ensemble_predict,
    ensemble_scores,
    fold_scores,
    search_threshold,
    train_recognizer,
)
from kgactive.synthetic import make_benchmark, sample_labels
from kgactive.uncertainty import margin_uncertainty
from kgactive.vectors import AcquisitionVector, ScoreMatrix

# Tuned workload for the ensemble end-to-end gate (5 minutes of wall clock
# for five seeded runs): full-width encoders with a reduced negative-sample
# count; single-precision training keeps all five seeds near 180s total.
ENSEMBLE_GATE = dict(
    out_degree=10,
    recognizer=dict(input_dim=500, output_dim=400, epochs=600, lr=0.015, n_negatives=4, k_folds=5),
)

# Campaign profile for the strategy-ordering gate (30-minute budget).
# Structure-aware selection pays off when link coverage is uneven, so the
# benchmark graph skews link targets toward hub entities (heavy-tailed
# in-degree); a compact embedding model refreshed per iteration leaves
# genuine residual uncertainty for the propagation step to exploit, and a
# slim recognizer retrains from the labels gathered so far.
ORDERING_GATE = dict(
    out_degree=10,
    target_skew=1.0,
    model=dict(dim=24, epochs=50, lr=0.02, align_weight=8.0, n_negatives=4, seed=0),
    recognizer=dict(input_dim=96, output_dim=64, epochs=120, lr=0.02, n_negatives=4, k_folds=5),
)


@pytest.fixture
def report(capsys):
    def _report(criterion: str, passed: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"[ACCEPTANCE] {'PASS' if passed else 'FAIL'}  {criterion}: {detail}")

    return _report


class TestInfluencePropagation:
    def test_power_iteration_matches_dense_solve(self, report):
        """20 random 50-node digraphs: fixed point equals a direct solve."""
        rng = np.random.default_rng(42)
        cfg = StructUncertaintyConfig(alpha=0.1, eps=1e-6, max_iters=1000)
        worst = 0.0
        elapsed = 0.0
        for _ in range(20):
            kg = random_digraph(50, 0.1, rng)
            u = rng.random(50)
            vec = AcquisitionVector(np.arange(50), u)
            t0 = time.perf_counter()
            f = structure_aware_uncertainty(build_influence_matrix(kg), vec, cfg)
            elapsed += time.perf_counter() - t0
            heads, tails = kg.dedup_edges
            expect = solve_influence_fixed_point(influence_dense(heads, tails, 50), u, 0.1)
            worst = max(worst, float(np.abs(f.values - expect).max()))
        ok = worst < 1e-6 and elapsed < 1.0
        report(
            "influence fixed point vs dense solve",
            ok,
            f"max abs err {worst:.2e} (< 1e-06), {elapsed:.2f}s for 20 graphs (< 1s)",
        )
        assert worst < 1e-6
        assert elapsed < 1.0

    def test_alpha_zero_reduces_to_plain_uncertainty(self, report):
        """alpha=0: the structured ranking equals the margin ranking, ties included."""
        rng = np.random.default_rng(7)
        cfg = StructUncertaintyConfig(alpha=0.0, eps=1e-12, max_iters=10)
        agree = True
        for trial in range(5):
            kg = random_digraph(30, 0.15, rng)
            values = rng.standard_normal((30, 12))
            if trial >= 3:  # force heavy ties, including tied margins
                values = np.round(values)
            matrix = ScoreMatrix(np.arange(30), np.arange(12), values)
            u = margin_uncertainty(matrix)
            f = structure_aware_uncertainty(build_influence_matrix(kg), u, cfg)
            same_order = np.array_equal(
                np.argsort(u.values, kind="stable"), np.argsort(f.values, kind="stable")
            )
            # tied inputs must stay tied in the output (and vice versa)
            same_ties = np.array_equal(
                u.values[:, None] == u.values[None, :], f.values[:, None] == f.values[None, :]
            )
            agree = agree and same_order and same_ties
        report("alpha=0 degeneracy", agree, "argsort equality on 5 score matrices incl. ties")
        assert agree

    def test_unit_bachelor_filter_degenerates_to_structural_sampling(self, toy, report):
        """f_b forced to 1 everywhere: batch-for-batch identical selections."""
        kg1, kg2, store = toy

        def config(strategy: str, **kw) -> CampaignConfig:
            return CampaignConfig(
                strategy=strategy,
                budget=30,
                batch_size=10,
                model=ea_model.TrainConfig(dim=16, epochs=10, lr=0.05, seed=7),
                seed=0,
                **kw,
            )

        log_struct = run_campaign(kg1, kg2, store, config("struct_uncert"))
        log_prod = run_campaign(kg1, kg2, store, config("active_ea", use_recognizer=False))
        batches_equal = all(
            a["selected"] == b["selected"] for a, b in zip(log_struct.records, log_prod.records)
        )
        report(
            "no-bachelor degeneracy",
            batches_equal,
            f"{len(log_struct.records)} batches identical under equal seeds",
        )
        assert batches_equal


class TestContrastiveObjective:
    def test_zero_loss_and_hinge_constructions(self, report):
        """Coincident positives + distant negatives -> exactly 0; a
        zero-distance negative contributes exactly balance * margin."""
        h1 = np.array([[0.0, 0.0], [3.0, 4.0]])
        h2 = np.array([[0.0, 0.0], [3.0, 4.0]])
        zero = contrastive_loss(h1, h2, np.array([[0, 0], [1, 1]]), np.array([[0, 1], [1, 0]]), 1.5, 0.1)
        hinge = contrastive_loss(h1, h2, np.empty((0, 2), dtype=int), np.array([[0, 0]]), 1.5, 0.1)
        ok = zero == 0.0 and hinge == 0.1 * 1.5
        report(
            "two-term margin loss",
            ok,
            f"zero construction = {zero!r} (exact 0), hinge at distance 0 = {hinge!r} "
            f"(exactly balance*margin)",
        )
        assert zero == 0.0
        assert hinge == 0.1 * 1.5

    def test_threshold_search_matches_exhaustive_scan(self, report):
        """50 random validation sets: returned cut is exactly optimal."""
        rng = np.random.default_rng(99)
        exact = 0
        for _ in range(50):
            n_folds = int(rng.integers(1, 5))
            validations = []
            for _ in range(n_folds):
                size = int(rng.integers(2, 25))
                scores = np.round(rng.standard_normal(size), 2)  # duplicates likely
                truth = rng.integers(0, 2, size)
                validations.append((scores, truth))
            gamma = search_threshold(validations)
            achieved = float(
                np.mean([micro_f1((s > gamma).astype(int), t) for s, t in validations])
            )
            _, best = best_threshold_exhaustive(validations)
            exact += int(achieved == best)
        report(
            "threshold search optimality",
            exact == 50,
            f"{exact}/50 score sets achieve the exhaustive-scan optimum exactly",
        )
        assert exact == 50

    def test_ensemble_mean_and_threshold_flip(self, toy, report):
        """Ensemble score is the arithmetic fold mean; the matchable
        decision flips exactly when the score crosses the threshold."""
        kg1, kg2, store = toy
        pos, neg = sample_labels(store, 20, seed=1)
        cfg = RecognizerConfig(input_dim=32, output_dim=24, epochs=15, k_folds=3, seed=1)
        model = train_recognizer(kg1, kg2, pos, neg, cfg)
        ids = list(range(store.n1))
        targets = list(range(kg2.num_entities))
        ens = ensemble_scores(model, kg1, kg2, ids, targets)
        per_fold = [fold_scores(f, kg1, kg2, ids, targets).values for f in model.folds]
        mean_oracle = np.zeros(len(ids))
        for vals in per_fold:
            mean_oracle += vals
        mean_oracle /= len(per_fold)
        mean_ok = bool(np.allclose(ens.values, mean_oracle, rtol=0, atol=1e-12))

        pivot = float(np.median(ens.values))
        pinned = RecognizerModel(model.folds, pivot, cfg, model.fallback_single_fold)
        preds = ensemble_predict(pinned, kg1, kg2, ids, targets)
        flip_ok = bool(np.array_equal(preds.values, (ens.values > pivot).astype(float)))
        at_gamma_is_bachelor = preds.values[int(np.argmin(np.abs(ens.values - pivot)))] == 0.0

        ok = mean_ok and flip_ok and at_gamma_is_bachelor
        report(
            "ensemble mean + threshold flip",
            ok,
            f"fold-mean max dev {float(np.abs(ens.values - mean_oracle).max()):.1e}, "
            f"decision boundary strict at gamma",
        )
        assert mean_ok and flip_ok and at_gamma_is_bachelor


class TestRecognizerEndToEnd:
    def test_ensemble_quality_and_stability(self, report):
        """300-entity isomorphic pair, 20% injected bachelors, 60 labels,
        five seeds: high mean quality, ensemble never below its worst fold,
        and more stable across seeds than single folds.  Under 5 minutes."""
        t0 = time.perf_counter()
        kg1, kg2, store = make_benchmark(
            n_entities=300, bachelor_fraction=0.2, out_degree=ENSEMBLE_GATE["out_degree"], seed=0
        )
        ens_scores: list[float] = []
        fold_level: list[float] = []
        ens_ge_min_fold = True
        for seed in range(1, 6):
            pos, neg = sample_labels(store, 60, seed=seed)
            cfg = RecognizerConfig(seed=seed, **ENSEMBLE_GATE["recognizer"])
            model = train_recognizer(kg1, kg2, pos, neg, cfg)
            pool = sorted(set(range(store.n1)) - set(pos) - neg)
            truth = np.array([1 if e in store.gold else 0 for e in pool])
            targets = range(kg2.num_entities)
            ens = ensemble_scores(model, kg1, kg2, pool, targets).values
            ens_f1 = micro_f1((ens > model.gamma).astype(int), truth)
            fold_f1s = [
                micro_f1(
                    (fold_scores(f, kg1, kg2, pool, targets).values > model.gamma).astype(int),
                    truth,
                )
                for f in model.folds
            ]
            ens_scores.append(ens_f1)
            fold_level.extend(fold_f1s)
            ens_ge_min_fold = ens_ge_min_fold and ens_f1 >= min(fold_f1s)
        elapsed = time.perf_counter() - t0

        mean_ens = float(np.mean(ens_scores))
        sd_ens = float(np.std(ens_scores, ddof=1))
        sd_folds = float(np.std(fold_level, ddof=1))
        ok = mean_ens >= 0.85 and ens_ge_min_fold and sd_ens <= sd_folds and elapsed < 300
        report(
            "recognizer end-to-end",
            ok,
            f"mean ensemble F1 {mean_ens:.3f} (>= 0.85, min seed {min(ens_scores):.3f}), "
            f"ensemble >= worst fold: {ens_ge_min_fold}, "
            f"sd {sd_ens:.4f} <= fold sd {sd_folds:.4f}, {elapsed:.0f}s (< 300s)",
        )
        assert mean_ens >= 0.85
        assert ens_ge_min_fold
        assert sd_ens <= sd_folds
        assert elapsed < 300


class TestStrategyOrdering:
    def test_budgeted_campaign_ordering(self, report):
        """30% bachelors, budget = half of E1, batches of 10, five seeds:
        the full acquisition beats random and plain uncertainty on
        AUC@0.5, and the structural signal alone beats plain uncertainty.
        Under 30 minutes."""
        t0 = time.perf_counter()
        kg1, kg2, store = make_benchmark(
            n_entities=300,
            bachelor_fraction=0.3,
            out_degree=ORDERING_GATE["out_degree"],
            target_skew=ORDERING_GATE["target_skew"],
            seed=0,
        )
        budget = store.n1 // 2
        means: dict[str, float] = {}
        for strategy in ("active_ea", "struct_uncert", "uncertainty", "rand"):
            aucs = []
            for seed in range(5):
                config = CampaignConfig(
                    strategy=strategy,
                    budget=budget,
                    batch_size=10,
                    model=ea_model.TrainConfig(**ORDERING_GATE["model"]),
                    recognizer=RecognizerConfig(**ORDERING_GATE["recognizer"]),
                    seed=seed,
                )
                log = run_campaign(kg1, kg2, store, config)
                aucs.append(auc_at(log.curve(), 0.5))
            means[strategy] = float(np.mean(aucs))
        elapsed = time.perf_counter() - t0

        ordering_ok = (
            means["active_ea"] > means["rand"]
            and means["active_ea"] > means["uncertainty"]
            and means["struct_uncert"] > means["uncertainty"]
        )
        ok = ordering_ok and elapsed < 1800
        detail = ", ".join(f"{name} {auc:.4f}" for name, auc in sorted(means.items(), key=lambda kv: -kv[1]))
        report(
            "strategy ordering",
            ok,
            f"mean AUC@0.5 over 5 seeds: {detail}; {elapsed:.0f}s (< 1800s)",
        )
        assert means["active_ea"] > means["rand"]
        assert means["active_ea"] > means["uncertainty"]
        assert means["struct_uncert"] > means["uncertainty"]
        assert elapsed < 1800


class TestBookkeeping:
    def test_budget_audit_partition_and_reproducibility(self, toy, tmp_path, report):
        kg1, kg2, store = toy
        config = CampaignConfig(
            strategy="uncertainty",
            budget=30,
            batch_size=10,
            model=ea_model.TrainConfig(dim=16, epochs=10, lr=0.05, seed=7),
            seed=3,
        )
        log = run_campaign(kg1, kg2, store, config)
        within_budget = all(r["oracle_accesses"] <= config.budget for r in log.records)
        partitioned = all(
            r["labelled_pos"] + r["labelled_neg"] + r["pool_size"] == store.n1
            for r in log.records
        )
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        log.to_jsonl(a, timing=False)
        run_campaign(kg1, kg2, store, config).to_jsonl(b, timing=False)
        reproducible = a.read_bytes() == b.read_bytes()
        ok = within_budget and partitioned and reproducible
        report(
            "campaign bookkeeping",
            ok,
            f"accesses <= budget: {within_budget}, label partition: {partitioned}, "
            f"byte-identical rerun: {reproducible}",
        )
        assert within_budget and partitioned and reproducible


class TestMetricOracles:
    def test_auc_matches_dense_riemann_integration(self, report):
        rng = np.random.default_rng(17)
        worst = 0.0
        for _ in range(10):
            size = int(rng.integers(3, 40))
            # well-separated grid keeps the dense trapezoid's kink error tiny
            xs = np.cumsum(rng.random(size) + 0.05)
            xs = xs / xs[-1]
            ys = rng.random(size)
            x_max = float(rng.uniform(xs[1], 1.2))
            got = auc_at(LearningCurve(xs, ys), x_max)
            want = riemann_auc(xs, ys, x_max)
            worst = max(worst, abs(got - want))
        report(
            "AUC vs dense integration",
            worst < 1e-6,
            f"max abs err {worst:.2e} (< 1e-06) over 10 random curves",
        )
        assert worst < 1e-6

    def test_hit_at_one_matches_hand_counts(self, report):
        """3x3 score matrices with known winners, realized through 1-d
        embeddings (score is negative distance, argmax ties to lowest id)."""
        config = ea_model.TrainConfig(dim=1)
        rel = np.zeros((1, 1))

        def model_from(pos1, pos2):
            return ea_model.EmbeddingModel(
                np.asarray(pos1, dtype=float).reshape(-1, 1),
                np.asarray(pos2, dtype=float).reshape(-1, 1),
                rel,
                rel,
                config,
            )

        # each e1 sits exactly on its counterpart -> every row won by gold
        perfect = ea_model.hit_at_1(model_from([0.0, 1.0, 2.0], [0.0, 1.0, 2.0]), [(0, 0), (1, 1), (2, 2)])
        # every e1 closest to column 0 -> only the first pair is a hit
        collapsed = ea_model.hit_at_1(model_from([0.0, 0.1, 0.2], [0.0, 5.0, 9.0]), [(0, 0), (1, 1), (2, 2)])
        # one of three rows misses its gold winner
        mixed = ea_model.hit_at_1(model_from([0.0, 1.0, 1.9], [0.0, 1.0, 4.0]), [(0, 0), (1, 1), (2, 2)])
        # entity 0 is equidistant from columns 0 and 2: the tie must go to
        # the lowest column id, which is its gold counterpart
        tied = ea_model.hit_at_1(model_from([2.0, 9.0, 40.0], [0.0, 9.0, 4.0]), [(0, 0), (1, 1), (2, 2)])
        ok = (
            perfect == 1.0
            and collapsed == pytest.approx(1 / 3)
            and mixed == pytest.approx(2 / 3)
            and tied == pytest.approx(2 / 3)
        )
        report(
            "hit@1 hand values",
            ok,
            f"perfect {perfect}, collapsed {collapsed:.3f} (= 1/3), mixed {mixed:.3f} (= 2/3), "
            f"tie-to-lowest {tied:.3f} (= 2/3)",
        )
        assert ok

    def test_training_loss_gradient_matches_finite_differences(self, report):
        rng = np.random.default_rng(5)
        n1, n2, dim = 5, 6, 4
        pairs = np.array([[0, 1], [2, 3], [4, 0]])
        neg_pairs = np.array([[0, 2], [1, 5], [3, 4], [4, 2]])
        triples = np.array([[0, 0, 1], [1, 1, 2], [3, 0, 4], [2, 1, 0]])
        neg_triples = np.array([[0, 0, 3], [1, 1, 4], [3, 0, 2], [2, 1, 4]])
        ent1 = rng.standard_normal((n1, dim))
        ent2 = rng.standard_normal((n2, dim))
        rel = rng.standard_normal((2, dim))

        def align_loss(flat: np.ndarray) -> float:
            e1 = flat[: n1 * dim].reshape(n1, dim)
            e2 = flat[n1 * dim :].reshape(n2, dim)
            loss, _, _ = ea_model.alignment_loss_and_grad(e1, e2, pairs, neg_pairs, 2.0)
            return loss

        flat = np.concatenate([ent1.ravel(), ent2.ravel()])
        _, g1, g2 = ea_model.alignment_loss_and_grad(ent1, ent2, pairs, neg_pairs, 2.0)
        analytic = np.concatenate([g1.ravel(), g2.ravel()])
        numeric = finite_difference_gradient(align_loss, flat)
        err_align = float(
            np.abs(analytic - numeric).max() / max(np.abs(numeric).max(), 1e-12)
        )

        def trip_loss(flat: np.ndarray) -> float:
            ent = flat[: n1 * dim].reshape(n1, dim)
            r = flat[n1 * dim :].reshape(2, dim)
            loss, _, _ = ea_model.triple_loss_and_grad(ent, r, triples, neg_triples, 1.0)
            return loss

        flat_t = np.concatenate([ent1.ravel(), rel.ravel()])
        _, ge, gr = ea_model.triple_loss_and_grad(ent1, rel, triples, neg_triples, 1.0)
        analytic_t = np.concatenate([ge.ravel(), gr.ravel()])
        numeric_t = finite_difference_gradient(trip_loss, flat_t)
        err_triple = float(
            np.abs(analytic_t - numeric_t).max() / max(np.abs(numeric_t).max(), 1e-12)
        )

        ok = err_align < 1e-4 and err_triple < 1e-4
        report(
            "loss gradients vs finite differences",
            ok,
            f"alignment rel err {err_align:.2e}, relation rel err {err_triple:.2e} (< 1e-04)",
        )
        assert err_align < 1e-4
        assert err_triple < 1e-4
