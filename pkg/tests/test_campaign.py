"""Campaign loop: selection rules, oracle audit, bookkeeping, snapshots, sessions."""
from __future__ import annotations

import json

import numpy as np
import pytest

from kgactive.campaign import (
    STRATEGIES,
    CampaignConfig,
    CampaignState,
    InteractiveSession,
    OracleAnswer,
    SimulatedOracle,
    final_acquisition,
    resume_campaign,
    run_campaign,
    select_batch,
)
from kgactive.ea_model import TrainConfig
from kgactive.errors import (
    ConfigError,
    ConflictError,
    DomainError,
    OneToOneViolationError,
    UnknownQueryError,
)
from kgactive.recognizer import RecognizerConfig
from kgactive.vectors import AcquisitionVector


def fast_config(strategy: str, budget: int, batch: int, **kw) -> CampaignConfig:
    defaults = dict(
        strategy=strategy,
        budget=budget,
        batch_size=batch,
        model=TrainConfig(dim=16, epochs=10, lr=0.05, seed=7),
        recognizer=RecognizerConfig(input_dim=24, output_dim=16, epochs=10, k_folds=3, seed=7),
        seed=0,
    )
    defaults.update(kw)
    return CampaignConfig(**defaults)


def records_without_timing(log):
    return [{k: v for k, v in rec.items() if k != "wall_time"} for rec in log.records]


class TestFinalAcquisition:
    def test_all_ones_filter_is_identity(self, rng):
        ids = np.arange(6)
        f_su = AcquisitionVector(ids, rng.random(6))
        f_b = AcquisitionVector(ids, np.ones(6))
        assert np.array_equal(final_acquisition(f_su, f_b).values, f_su.values)

    def test_all_zeros_filter_suppresses_everything(self, rng):
        ids = np.arange(6)
        f_su = AcquisitionVector(ids, rng.random(6))
        f_b = AcquisitionVector(ids, np.zeros(6))
        assert np.all(final_acquisition(f_su, f_b).values == 0.0)

    def test_mixed_filter_is_elementwise_product(self, rng):
        ids = np.arange(8)
        su_vals = rng.random(8)
        b_vals = rng.integers(0, 2, 8).astype(float)
        out = final_acquisition(AcquisitionVector(ids, su_vals), AcquisitionVector(ids, b_vals))
        assert np.allclose(out.values, su_vals * b_vals)

    def test_mismatched_candidates_rejected(self):
        a = AcquisitionVector(np.arange(3), np.ones(3))
        b = AcquisitionVector(np.arange(1, 4), np.ones(3))
        with pytest.raises(DomainError):
            final_acquisition(a, b)


class TestSelectBatch:
    def test_ties_break_by_ascending_entity_id(self):
        scores = AcquisitionVector(np.arange(6), np.array([0.5, 0.9, 0.5, 0.9, 0.1, 0.9]))
        assert select_batch(scores, range(6), 4) == [1, 3, 5, 0]

    def test_matches_full_sort_oracle_prefix(self, rng):
        ids = np.arange(50)
        values = rng.integers(0, 5, 50).astype(float)  # heavy ties
        scores = AcquisitionVector(ids, values)
        pool = sorted(rng.choice(50, size=30, replace=False).tolist())
        expect = sorted(pool, key=lambda e: (-values[e], e))
        for n in (1, 7, 30):
            assert select_batch(scores, pool, n) == expect[:n]

    def test_only_pool_entities_are_selected(self, rng):
        scores = AcquisitionVector(np.arange(10), rng.random(10))
        picked = select_batch(scores, [2, 5, 8], 3)
        assert set(picked) == {2, 5, 8}

    def test_batch_capped_at_pool_size(self, rng):
        scores = AcquisitionVector(np.arange(10), rng.random(10))
        assert len(select_batch(scores, [1, 2], 5)) == 2

    def test_empty_pool_rejected(self, rng):
        scores = AcquisitionVector(np.arange(4), rng.random(4))
        with pytest.raises(DomainError):
            select_batch(scores, [], 2)

    def test_nonpositive_batch_rejected(self, rng):
        scores = AcquisitionVector(np.arange(4), rng.random(4))
        with pytest.raises(DomainError):
            select_batch(scores, [0, 1], 0)


class TestSimulatedOracle:
    def test_answers_follow_gold_and_counts_accesses(self, toy):
        _, _, store = toy
        oracle = SimulatedOracle(store)
        match = next(iter(store.gold))
        bachelor = next(iter(store.bachelors1))
        answers = oracle.answer([match, bachelor])
        assert answers[0].counterpart == store.gold[match]
        assert not answers[0].is_bachelor
        assert answers[1].counterpart is None and answers[1].is_bachelor
        assert oracle.accesses == 2
        oracle.answer([match])
        assert oracle.accesses == 3

    def test_out_of_range_query_rejected(self, toy):
        oracle = SimulatedOracle(toy[2])
        with pytest.raises(DomainError):
            oracle.answer([toy[2].n1])

    def test_answer_serialization(self):
        assert OracleAnswer(3, 7).as_dict() == {"entity": 3, "outcome": "match", "counterpart": 7}
        assert OracleAnswer(4, None).as_dict() == {
            "entity": 4,
            "outcome": "bachelor",
            "counterpart": None,
        }


class TestCampaignConfig:
    def test_unknown_strategy_rejected(self):
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="magic", budget=10)

    def test_nonpositive_budget_rejected(self):
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="rand", budget=0)

    def test_batch_size_bounds(self):
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="rand", budget=10, batch_size=11)
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="rand", budget=10, batch_size=0)

    def test_mc_samples_and_eval_every_bounds(self):
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="rand", budget=10, batch_size=5, mc_samples=1)
        with pytest.raises(ConfigError):
            CampaignConfig(strategy="rand", budget=10, batch_size=5, eval_every=0)

    def test_budget_larger_than_source_side_rejected(self, toy):
        kg1, kg2, store = toy
        with pytest.raises(ConfigError):
            CampaignState(kg1, kg2, store, fast_config("rand", store.n1 + 1, 10))


class TestCampaignRun:
    def test_three_iteration_bookkeeping_audit(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 30, 10))
        assert len(log.records) == 3
        seen: set[int] = set()
        for i, rec in enumerate(log.records, start=1):
            assert rec["iteration"] == i
            assert len(rec["selected"]) == 10
            assert rec["spent"] == 10 * i
            assert rec["oracle_accesses"] == rec["spent"] <= 30
            assert rec["labelled_pos"] + rec["labelled_neg"] + rec["pool_size"] == store.n1
            assert rec["proportion"] == pytest.approx(rec["spent"] / store.n1)
            assert not seen & set(rec["selected"])
            seen.update(rec["selected"])
            for ans in rec["answers"]:
                if ans["outcome"] == "match":
                    assert store.gold[ans["entity"]] == ans["counterpart"]
                else:
                    assert ans["entity"] in store.bachelors1
        assert log.records[-1]["campaign_complete"]

    def test_selected_scores_are_recorded_in_rank_order(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 10, 10))
        rec = log.records[0]
        vals = [rec["scores"][str(e)] for e in rec["selected"]]
        assert vals == sorted(vals, reverse=True)

    def test_final_batch_capped_at_remaining_budget(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 25, 10))
        assert [len(r["selected"]) for r in log.records] == [10, 10, 5]
        assert log.records[-1]["spent"] == 25

    def test_exhausting_the_pool_completes_the_campaign(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", store.n1, store.n1))
        rec = log.records[-1]
        assert rec["pool_size"] == 0
        assert rec["campaign_complete"]
        assert rec["test_size"] == 0
        assert rec["hit_at_1"] is None  # nothing left to rank against

    def test_run_iteration_after_completion_rejected(self, toy):
        kg1, kg2, store = toy
        state = CampaignState(kg1, kg2, store, fast_config("rand", 10, 10))
        state.run_iteration()
        assert state.done
        with pytest.raises(DomainError):
            state.run_iteration()

    def test_reruns_are_byte_identical_without_timing(self, toy, tmp_path):
        kg1, kg2, store = toy
        cfg = fast_config("uncertainty", 20, 10)
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_campaign(kg1, kg2, store, cfg).to_jsonl(a, timing=False)
        run_campaign(kg1, kg2, store, cfg).to_jsonl(b, timing=False)
        assert a.read_bytes() == b.read_bytes()

    def test_campaign_seed_varies_the_run(self, toy):
        kg1, kg2, store = toy
        log0 = run_campaign(kg1, kg2, store, fast_config("uncertainty", 10, 10, seed=0))
        log1 = run_campaign(kg1, kg2, store, fast_config("uncertainty", 10, 10, seed=1))
        assert log0.records[0]["selected"] != log1.records[0]["selected"]

    def test_eval_every_skips_intermediate_checkpoints(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 30, 10, eval_every=2))
        hits = [rec["hit_at_1"] for rec in log.records]
        assert hits[0] is None  # iteration 1 skipped
        assert hits[1] is not None  # iteration 2 on the cadence
        assert hits[2] is not None  # final iteration always evaluated
        assert len(log.curve().xs) == 2

    def test_curve_requires_two_checkpoints(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 10, 10))
        with pytest.raises(DomainError):
            log.curve()

    def test_all_ones_filter_reduces_to_structural_strategy(self, toy):
        """With the bachelor filter pinned to 1 the product strategy must
        select exactly the same batches as the structural signal alone."""
        kg1, kg2, store = toy
        cfg_plain = fast_config("struct_uncert", 30, 10)
        cfg_prod = fast_config("active_ea", 30, 10, use_recognizer=False)
        log_plain = run_campaign(kg1, kg2, store, cfg_plain)
        log_prod = run_campaign(kg1, kg2, store, cfg_prod)
        for a, b in zip(log_plain.records, log_prod.records):
            assert a["selected"] == b["selected"]

    def test_fully_vetoing_filter_falls_back_to_structural_scores(self, toy, monkeypatch):
        """A filter that rejects every remaining pool entity carries no
        ranking signal, so the product strategy must fall back to the
        structural scores (and flag it) instead of selecting arbitrary
        ids from an all-zero vector."""
        kg1, kg2, store = toy

        def veto_all(self, store):
            ids = np.arange(kg1.num_entities)
            return AcquisitionVector(ids, np.zeros(len(ids))), {"recognizer": "trained"}, None

        monkeypatch.setattr("kgactive.campaign._Scorer._bachelor_filter", veto_all)
        vetoed = CampaignState(kg1, kg2, store, fast_config("active_ea", 10, 10))
        batch, scores, flags, _ = vetoed.next_batch()
        assert flags["filter_fallback"] == "pool_fully_vetoed"
        plain = CampaignState(kg1, kg2, store, fast_config("struct_uncert", 10, 10))
        expected, _, _, _ = plain.next_batch()
        assert batch == expected

    def test_cold_start_skips_recognizer_then_trains_it(self, toy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("active_ea", 20, 10))
        first, second = log.records
        assert first["flags"]["recognizer"] == "skipped"
        assert "recognizer_skip_reason" in first["flags"]
        assert first["recognizer_micro_f1"] is None
        assert second["flags"]["recognizer"] == "trained"
        assert 0.0 <= second["recognizer_micro_f1"] <= 1.0

    @pytest.mark.parametrize("strategy", [s for s in STRATEGIES if s not in ("bald", "stddev")])
    def test_every_strategy_completes_one_iteration(self, toy, strategy):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config(strategy, 5, 5))
        assert log.records[0]["spent"] == 5
        assert log.records[0]["campaign_complete"]

    @pytest.mark.parametrize("strategy", ["bald", "stddev"])
    def test_stochastic_strategies_need_dropout(self, toy, strategy):
        kg1, kg2, store = toy
        with pytest.raises(ConfigError):
            run_campaign(kg1, kg2, store, fast_config(strategy, 5, 5))
        wet = TrainConfig(dim=16, epochs=10, lr=0.05, dropout=0.2, seed=7)
        log = run_campaign(kg1, kg2, store, fast_config(strategy, 5, 5, model=wet, mc_samples=4))
        assert log.records[0]["spent"] == 5

    def test_log_csv_has_one_row_per_iteration(self, toy, tmp_path):
        kg1, kg2, store = toy
        log = run_campaign(kg1, kg2, store, fast_config("rand", 20, 10))
        path = tmp_path / "curve.csv"
        log.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "proportion,hit_at_1,recognizer_micro_f1"
        assert len(lines) == 1 + len(log.records)

    def test_jsonl_starts_with_resolved_config(self, toy, tmp_path):
        kg1, kg2, store = toy
        cfg = fast_config("rand", 10, 10)
        log = run_campaign(kg1, kg2, store, cfg)
        path = tmp_path / "log.jsonl"
        log.to_jsonl(path)
        first = json.loads(path.read_text().splitlines()[0])
        assert first["config"]["strategy"] == "rand"
        assert first["config"]["budget"] == 10


class TestSnapshotResume:
    def test_resumed_campaign_matches_uninterrupted_run(self, toy, tmp_path):
        kg1, kg2, store = toy
        cfg = fast_config("rand", 30, 10)
        straight = run_campaign(kg1, kg2, store, cfg)

        state = CampaignState(kg1, kg2, store, cfg)
        state.run_iteration()
        state.snapshot(tmp_path / "snap")
        resumed = resume_campaign(kg1, kg2, store.copy(), tmp_path / "snap")

        a = records_without_timing(straight)
        b = records_without_timing(resumed)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_snapshot_round_trips_bookkeeping(self, toy, tmp_path):
        kg1, kg2, store = toy
        cfg = fast_config("uncertainty", 20, 10)
        state = CampaignState(kg1, kg2, store, cfg)
        state.run_iteration()
        state.snapshot(tmp_path)
        restored = CampaignState.resume(kg1, kg2, store.copy(), tmp_path)
        assert restored.iteration == state.iteration
        assert restored.spent == state.spent
        assert restored.oracle.accesses == state.oracle.accesses
        assert restored.store.labelled_pos == state.store.labelled_pos
        assert restored.store.labelled_neg == state.store.labelled_neg
        assert restored.store.pool == state.store.pool
        assert restored.rng.bit_generator.state == state.rng.bit_generator.state
        assert np.array_equal(restored.model.ent1, state.model.ent1)


class TestInteractiveSession:
    def gold_drive(self, session, store, order=None):
        """Answers the pending batch from the gold alignment."""
        pending = list(session.pending) if order is None else order
        for q in pending:
            session.submit(q, store.gold.get(q))

    def test_matches_simulated_oracle_run(self, toy):
        kg1, kg2, store = toy
        cfg = fast_config("rand", 30, 10)
        simulated = run_campaign(kg1, kg2, store, cfg)
        session = InteractiveSession(kg1, kg2, store, cfg)
        while not session.complete:
            # submit in reverse order: application order must not depend on it
            self.gold_drive(session, store, order=list(reversed(session.pending)))
            session.advance()
        a = records_without_timing(simulated)
        b = records_without_timing(session.state.log)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_duplicate_submission_is_acknowledged_not_double_spent(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        q = session.pending[0]
        assert session.submit(q, store.gold.get(q)) == "recorded"
        assert session.submit(q, store.gold.get(q)) == "duplicate"
        assert len(session.answers) == 1
        for other in session.pending[1:]:
            session.submit(other, store.gold.get(other))
        session.advance()
        assert session.state.spent == 5
        assert session.state.oracle.accesses == 5

    def test_conflicting_resubmission_rejected(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        q = session.pending[0]
        session.submit(q, None)
        with pytest.raises(ConflictError):
            session.submit(q, 0)

    def test_unknown_query_rejected(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        outside = next(e for e in range(store.n1) if e not in session.pending)
        with pytest.raises(UnknownQueryError):
            session.submit(outside, None)

    def test_counterpart_range_checked(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        with pytest.raises(DomainError):
            session.submit(session.pending[0], store.n2)

    def test_same_batch_counterpart_collision_rejected(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        q1, q2 = session.pending[:2]
        session.submit(q1, 0)
        with pytest.raises(OneToOneViolationError):
            session.submit(q2, 0)

    def test_previously_consumed_counterpart_rejected(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        self.gold_drive(session, store)
        consumed = next(c for c in session.answers.values() if c is not None)
        session.advance()
        with pytest.raises(OneToOneViolationError):
            session.submit(session.pending[0], consumed)

    def test_incomplete_batch_cannot_advance_without_force(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        session.submit(session.pending[0], store.gold.get(session.pending[0]))
        with pytest.raises(DomainError):
            session.advance()

    def test_forced_partial_advance_keeps_unanswered_in_pool(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        answered = session.pending[:3]
        skipped = [e for e in session.pending if e not in answered]
        for q in answered:
            session.submit(q, store.gold.get(q))
        record = session.advance(force=True)
        assert record["flags"]["force_advanced"] is True
        assert record["selected"] == answered
        assert session.state.spent == 3
        for e in skipped:
            assert e in session.state.store.pool

    def test_advance_after_completion_rejected(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 4, 2))
        while not session.complete:
            self.gold_drive(session, store)
            session.advance()
        assert session.pending == []
        with pytest.raises(DomainError):
            session.advance()

    def test_pending_score_lookup(self, toy):
        kg1, kg2, store = toy
        session = InteractiveSession(kg1, kg2, store, fast_config("rand", 10, 5))
        scores = [session.pending_score_of(q) for q in session.pending]
        assert scores == sorted(scores, reverse=True)

    def test_session_resume_matches_uninterrupted_run(self, toy, tmp_path):
        kg1, kg2, store = toy
        cfg = fast_config("rand", 30, 10)
        straight = run_campaign(kg1, kg2, store, cfg)

        first = InteractiveSession(kg1, kg2, store, cfg, snapshot_dir=tmp_path / "s")
        self.gold_drive(first, store)
        first.advance()
        resumed = InteractiveSession.resume(kg1, kg2, store.copy(), tmp_path / "s")
        while not resumed.complete:
            self.gold_drive(resumed, store)
            resumed.advance()

        a = records_without_timing(straight)
        b = records_without_timing(resumed.state.log)
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
