from __future__ import annotations

import numpy as np
import pytest

from voiroute.boosting import TrainConfig
from voiroute.corpus import CorpusError, CorrectnessRecord, Dataset
from voiroute.costs import builtin_profile, normalized_costs
from voiroute.harness import (
    EvalReport,
    FoldReport,
    GridSpec,
    evaluate_policy,
    export_pareto_csv,
    grid_search,
    pareto_frontier,
    run_cv,
    train_bank,
)
from voiroute.policy import (
    AccuracyOnlyPolicy,
    FixedFidelityPolicy,
    GreedyVoiPolicy,
    OraclePolicy,
    PolicyConfig,
)
from voiroute.synthworld import builtin_world, generate

PROFILE = builtin_profile("edge-cloud")
COSTS = normalized_costs(PROFILE)
COSTS2 = {"caption": COSTS["caption"], "full": COSTS["full"]}


class TruthBank:
    """Test double: emits configured per-fidelity probabilities per question."""

    def __init__(self, probs_by_text):
        self.probs_by_text = probs_by_text

    def predict_success_batch(self, questions):
        fids = next(iter(self.probs_by_text.values())).keys()
        return {
            fid: np.array([self.probs_by_text[q][fid] for q in questions])
            for fid in fids
        }


def _records(rows):
    return [CorrectnessRecord(*row) for row in rows]


def test_train_bank_constant_labels_calibrate_to_one(small_monotone_corpus):
    spec, corpus = small_monotone_corpus
    records = [
        CorrectnessRecord(rec.qid, rec.question_text, rec.fidelity_id, 1)
        for rec in corpus.dataset
    ]
    bank = train_bank(records, spec.fidelities, gbr_config=TrainConfig(n_estimators=5))
    probs = bank.predict_success("how many vehicle street questions")
    for fid in spec.fidelities:
        assert probs[fid] == 1.0


def test_train_bank_none_method_clips_raw_scores(small_monotone_corpus):
    spec, corpus = small_monotone_corpus
    bank = train_bank(
        corpus.dataset.records,
        spec.fidelities,
        gbr_config=TrainConfig(n_estimators=10),
        calibration="none",
    )
    texts = [corpus.dataset.question_text(q) for q in sorted(corpus.dataset.qids)[:40]]
    X = bank.featurizer.transform(texts)
    for fid, pipe in bank.pipelines.items():
        raw = pipe.model.predict(X)
        assert np.array_equal(pipe.predict_proba(X), np.clip(raw, 0.0, 1.0))


def test_train_bank_missing_fidelity_rejected():
    records = _records([("q1", "text one", "caption", 1), ("q2", "text two", "caption", 0)])
    with pytest.raises(ValueError, match="full"):
        train_bank(records, ["caption", "full"], gbr_config=TrainConfig(n_estimators=1))


def test_train_bank_unknown_calibration_rejected():
    records = _records([("q1", "text one", "caption", 1)])
    with pytest.raises(ValueError, match="calibration"):
        train_bank(records, ["caption"], calibration="platt")


def test_train_bank_vocabulary_sees_training_questions_only(small_monotone_corpus):
    spec, corpus = small_monotone_corpus
    bank = train_bank(
        corpus.dataset.records, spec.fidelities, gbr_config=TrainConfig(n_estimators=1)
    )
    terms = set(bank.vocabulary.term_index)
    seen = set()
    for qid in corpus.dataset.qids:
        seen.update(corpus.dataset.question_text(qid).lower().split())
    assert terms == seen


def _test_fold(probs_by_text, labels_by_text):
    """Build aligned records + a TruthBank for a two-level profile."""
    records = []
    for i, (text, labels) in enumerate(labels_by_text.items()):
        for fid, y in labels.items():
            records.append(CorrectnessRecord(f"q{i}", text, fid, y))
    return TruthBank(probs_by_text), records


def test_evaluate_policy_fixed_cheapest_costs_exactly_cheapest():
    bank, records = _test_fold(
        {"t one": {"caption": 0.5, "full": 0.9}, "t two": {"caption": 0.1, "full": 0.7}},
        {"t one": {"caption": 1, "full": 1}, "t two": {"caption": 0, "full": 1}},
    )
    report = evaluate_policy(bank, FixedFidelityPolicy("caption"), records, COSTS2)
    assert report.avg_cost == COSTS["caption"]
    assert report.accuracy == 0.5
    assert report.fidelity_distribution["caption"] == 1.0
    assert sum(report.fidelity_distribution.values()) == pytest.approx(1.0, abs=1e-9)


def test_evaluate_policy_accuracy_only_on_monotone_probs_always_full():
    texts = [f"question number {i}" for i in range(12)]
    probs = {t: {fid: 0.2 + 0.1 * j for j, fid in enumerate(PROFILE.level_ids)} for t in texts}
    labels = {t: {fid: 1 for fid in PROFILE.level_ids} for t in texts}
    bank, records = _test_fold(probs, labels)
    report = evaluate_policy(bank, AccuracyOnlyPolicy(), records, COSTS)
    assert report.avg_cost == 120.0
    assert report.fidelity_distribution["full"] == 1.0


def test_evaluate_policy_oracle_lambda_zero_matches_top_fidelity_accuracy():
    spec = builtin_world("monotone", n_questions=300, seed=5)
    corpus = generate(spec)
    table = corpus.true_prob_table(spec)
    texts = {corpus.dataset.question_text(q): q for q in corpus.dataset.qids}
    bank = TruthBank(
        {t: {fid: 0.5 for fid in spec.fidelities} for t in texts}
    )
    policy = OraclePolicy(lam=0.0, true_probs=lambda qid: table[qid])
    report = evaluate_policy(bank, policy, list(corpus.dataset.records), COSTS)
    # the monotone world's top fidelity is strictly best for every archetype,
    # so oracle selection with lambda=0 reads exactly the 'full' labels
    full_labels = [rec.correct for rec in corpus.dataset if rec.fidelity_id == "full"]
    assert report.accuracy == pytest.approx(np.mean(full_labels), abs=1e-12)
    assert report.avg_cost == 120.0


def test_evaluate_policy_missing_label_is_hard_error():
    bank, records = _test_fold(
        {"t one": {"caption": 0.1, "full": 0.9}},
        {"t one": {"caption": 1, "full": 1}},
    )
    records = [r for r in records if r.fidelity_id != "full"]
    with pytest.raises(CorpusError, match=r"\('q0', 'full'\)"):
        evaluate_policy(bank, FixedFidelityPolicy("full"), records, COSTS2)


def test_evaluate_policy_pooled_and_selected_brier():
    bank, records = _test_fold(
        {"t one": {"caption": 1.0, "full": 1.0}, "t two": {"caption": 0.0, "full": 0.0}},
        {"t one": {"caption": 1, "full": 1}, "t two": {"caption": 0, "full": 0}},
    )
    report = evaluate_policy(bank, FixedFidelityPolicy("caption"), records, COSTS2)
    assert report.brier == 0.0
    assert report.brier_selected == 0.0


def _tiny_world_folds(seed=0, n=120, name="monotone"):
    spec = builtin_world(name, n_questions=n, seed=seed)
    corpus = generate(spec)
    records = list(corpus.dataset.records)
    third = len(records) // 3
    return [records[:third], records[third : 2 * third], records[2 * third :]]


def test_grid_search_singleton_returns_the_point():
    grid = GridSpec(lambda_values=(0.002,), tau_values=(0.01,), gbr_configs=(TrainConfig(),))
    cfg, policy = grid_search([[], []], grid, COSTS)
    assert cfg == TrainConfig()
    assert policy == PolicyConfig(lam=0.002, tau=0.01)


def test_grid_search_needs_two_folds_for_real_grids():
    grid = GridSpec(lambda_values=(0.001, 0.002), tau_values=(0.0,))
    with pytest.raises(ValueError, match="two training folds"):
        grid_search([_tiny_world_folds()[0]], grid, COSTS)


def test_grid_search_dominating_gbr_config_wins():
    # one archetype is best served by captions, the other by thumbnails; a
    # constant predictor sends everything to the thumbnail tier, so the
    # trained config achieves strictly higher validation accuracy AND lower
    # cost, and must win under any positive cost weight in the objective
    from voiroute.synthworld import Archetype, WorldSpec

    fids = PROFILE.level_ids
    spec = WorldSpec(
        archetypes=(
            Archetype("cheap_best", ("alphaone",),
                      dict(zip(fids, (0.95, 0.70, 0.70, 0.70, 0.70))), 0.5),
            Archetype("needs_resize", ("betatwo",),
                      dict(zip(fids, (0.05, 0.95, 0.95, 0.95, 0.95))), 0.5),
        ),
        fidelities=fids,
        n_questions=900,
        seed=3,
    )
    records = list(generate(spec).dataset.records)
    third = len(records) // 3
    folds = [records[:third], records[third : 2 * third], records[2 * third :]]
    grid = GridSpec(
        lambda_values=(0.004,),
        tau_values=(0.0,),
        gbr_configs=(TrainConfig(n_estimators=0), TrainConfig(max_depth=1)),
    )
    for objective_lambda in (0.1, 0.5, 2.0):
        cfg, _ = grid_search(folds, grid, COSTS, objective_lambda=objective_lambda)
        assert cfg == TrainConfig(max_depth=1)


def test_grid_search_deterministic():
    folds = _tiny_world_folds(seed=4, n=150)
    grid = GridSpec(
        lambda_values=(0.001, 0.004),
        tau_values=(0.0, 0.02),
        gbr_configs=(TrainConfig(n_estimators=10, max_depth=1),),
    )
    assert grid_search(folds, grid, COSTS) == grid_search(folds, grid, COSTS)


def _sentinel_dataset(n=90, seed=6):
    spec = builtin_world("monotone", n_questions=n, seed=seed)
    corpus = generate(spec)
    records = list(corpus.dataset.records)
    for fid in spec.fidelities:
        records.append(
            CorrectnessRecord("zsentinel", "zqxwsentinelterm appears here", fid, 1)
        )
    return Dataset(records), spec


def test_run_cv_each_qid_evaluated_exactly_once():
    spec = builtin_world("monotone", n_questions=100, seed=8)
    corpus = generate(spec)
    grid = GridSpec(
        lambda_values=(0.002,), tau_values=(0.0,), gbr_configs=(TrainConfig(n_estimators=5, max_depth=1),)
    )
    reports = run_cv(corpus.dataset, PROFILE, k=5, seed=8, grid=grid, policies=("voi",))
    total = sum(f.n_questions for f in reports["voi"].per_fold)
    assert total == 100


def test_run_cv_leakage_sentinel_probe():
    dataset, spec = _sentinel_dataset()
    from voiroute.corpus import assign_folds

    folds = assign_folds(dataset, 3, seed=1)
    sentinel_fold = folds.assignment["zsentinel"]
    seen = {}

    def on_fold(i, bank, gbr_cfg, policy_cfg):
        seen[i] = "zqxwsentinelterm" in bank.vocabulary.term_index

    grid = GridSpec(
        lambda_values=(0.002,), tau_values=(0.0,), gbr_configs=(TrainConfig(n_estimators=3, max_depth=1),)
    )
    run_cv(dataset, PROFILE, k=3, seed=1, grid=grid, policies=("voi",), on_fold=on_fold)
    assert seen[sentinel_fold] is False
    for i, present in seen.items():
        if i != sentinel_fold:
            assert present is True


def test_run_cv_report_invariants_and_decision_logs():
    spec = builtin_world("heterogeneous-mix", n_questions=150, seed=9)
    corpus = generate(spec)
    grid = GridSpec(
        lambda_values=(0.002,), tau_values=(0.0,), gbr_configs=(TrainConfig(n_estimators=10, max_depth=1),)
    )
    logs = {"voi": []}
    reports = run_cv(
        corpus.dataset,
        PROFILE,
        k=3,
        seed=9,
        grid=grid,
        policies=("voi", "accuracy_only", "fixed_threshold", "fixed:full"),
        decision_logs=logs,
    )
    for name, rep in reports.items():
        assert 0.0 <= rep.accuracy <= 1.0
        assert COSTS["caption"] <= rep.avg_cost <= COSTS["full"]
        assert sum(rep.fidelity_distribution.values()) == pytest.approx(1.0, abs=1e-9)
    assert reports["fixed:full"].avg_cost == 120.0
    assert len(logs["voi"]) == 150
    fold, lam, tau, qid, decision = logs["voi"][0]
    assert lam == 0.002 and tau == 0.0
    assert decision.selected in PROFILE.level_ids


def test_trained_bank_recovers_true_probabilities():
    # the markers make archetypes separable, so predictions should land
    # within calibration error of the configured ground truth
    spec = builtin_world("monotone", n_questions=4000, seed=12)
    corpus = generate(spec)
    bank = train_bank(
        corpus.dataset.records, spec.fidelities, gbr_config=TrainConfig(max_depth=1)
    )
    held_out = generate(builtin_world("monotone", n_questions=1000, seed=13))
    qids = sorted(held_out.dataset.qids)
    batch = bank.predict_success_batch(
        [held_out.dataset.question_text(q) for q in qids]
    )
    by_arch: dict[str, list[int]] = {}
    for i, qid in enumerate(qids):
        by_arch.setdefault(held_out.truth[qid], []).append(i)
    for arch in spec.archetypes:
        idx = by_arch[arch.name]
        for fid in spec.fidelities:
            predicted = float(np.mean(batch[fid][idx]))
            assert predicted == pytest.approx(arch.true_p[fid], abs=0.05)


def test_run_cv_oracle_policy_needs_truth():
    spec = builtin_world("monotone", n_questions=60, seed=10)
    corpus = generate(spec)
    grid = GridSpec(lambda_values=(0.002,), tau_values=(0.0,), gbr_configs=(TrainConfig(n_estimators=1),))
    with pytest.raises(ValueError, match="oracle"):
        run_cv(corpus.dataset, PROFILE, k=3, seed=0, grid=grid, policies=("oracle",))


def test_pareto_frontier_rules():
    assert pareto_frontier([(0.7, 50.0)]) == [(0.7, 50.0)]
    assert pareto_frontier([(0.7, 50.0), (0.6, 60.0)]) == [(0.7, 50.0)]
    both = pareto_frontier([(0.7, 50.0), (0.8, 80.0)])
    assert both == [(0.7, 50.0), (0.8, 80.0)]
    # duplicates of a frontier point are retained (as one point)
    assert pareto_frontier([(0.7, 50.0), (0.7, 50.0)]) == [(0.7, 50.0)]
    # equal accuracy, higher cost is dominated
    assert pareto_frontier([(0.7, 50.0), (0.7, 60.0)]) == [(0.7, 50.0)]


def test_export_pareto_csv(tmp_path):
    reports = {
        "a": EvalReport(0.7, 50.0, 0.1, 0.1, {}),
        "b": EvalReport(0.6, 60.0, 0.1, 0.1, {}),
        "c": EvalReport(0.8, 80.0, 0.1, 0.1, {}),
    }
    path = tmp_path / "pareto.csv"
    export_pareto_csv(reports, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "policy,accuracy,avg_cost,on_frontier"
    rows = {line.split(",")[0]: line.split(",")[3] for line in lines[1:]}
    assert rows == {"a": "1", "b": "0", "c": "1"}


def test_eval_report_aggregation():
    folds = [
        FoldReport(
            accuracy=a, avg_cost=c, brier=0.1, brier_selected=0.1,
            fidelity_distribution={"caption": 1.0}, n_questions=10,
        )
        for a, c in [(0.5, 10.0), (0.7, 30.0)]
    ]
    report = EvalReport.from_folds(folds)
    assert report.accuracy == pytest.approx(0.6)
    assert report.avg_cost == pytest.approx(20.0)
    assert report.fidelity_distribution == {"caption": 1.0}
    obj = report.to_json_dict()
    assert len(obj["per_fold"]) == 2
