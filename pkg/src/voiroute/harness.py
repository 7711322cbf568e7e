"""Evaluation protocol: per-fold training, grid search, policy scoring.

Cross-validation is question-level and leak-free: vocabularies, calibrators,
and the (lambda, tau) pair are fitted on training folds only. Grid search
holds out the last training fold as an inner validation split and scores each
candidate by validation utility mean(correct) - 0.5 * mean(cost) / 120, with
ties broken toward lower cost, then lower lambda, then lower tau.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .boosting import TrainConfig
from .calibration import (
    ClippingCalibrator,
    IsotonicCalibrator,
    TemperatureCalibrator,
    brier,
    sigmoid,
)
from .corpus import CorpusError, CorrectnessRecord, Dataset, assign_folds
from .costs import CostProfile, normalized_costs
from .features import QuestionFeaturizer
from .policy import (
    AccuracyOnlyPolicy,
    ArgmaxUtilityPolicy,
    FidelityPipeline,
    FixedFidelityPolicy,
    FixedThresholdPolicy,
    GreedyVoiPolicy,
    OraclePolicy,
    PolicyConfig,
    PredictorBank,
    RoutingDecision,
    RoutingPolicy,
    levels_by_cost,
)

CALIBRATION_METHODS = ("isotonic", "temperature", "none")

DEFAULT_LAMBDA_GRID = (0.0005, 0.001, 0.002, 0.004, 0.008)
DEFAULT_TAU_GRID = (0.0, 0.01, 0.02, 0.05)
# capacity is part of the joint search: full-depth trees versus stumps
DEFAULT_GBR_GRID = (TrainConfig(), TrainConfig(max_depth=1))


@dataclass(frozen=True)
class GridSpec:
    """Joint search space over lambda, tau, and boosting configurations."""

    lambda_values: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    tau_values: tuple[float, ...] = DEFAULT_TAU_GRID
    gbr_configs: tuple[TrainConfig, ...] = DEFAULT_GBR_GRID

    def __post_init__(self) -> None:
        if not self.lambda_values or not self.tau_values or not self.gbr_configs:
            raise ValueError("grid lists must all be non-empty")

    @property
    def size(self) -> int:
        return len(self.lambda_values) * len(self.tau_values) * len(self.gbr_configs)


@dataclass
class FoldReport:
    """Metrics for one policy on one held-out fold."""

    accuracy: float
    avg_cost: float
    brier: float
    brier_selected: float
    fidelity_distribution: dict[str, float]
    n_questions: int
    lam: float | None = None
    tau: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "avg_cost": self.avg_cost,
            "brier": self.brier,
            "brier_selected": self.brier_selected,
            "fidelity_distribution": dict(self.fidelity_distribution),
            "n_questions": self.n_questions,
            "lambda": self.lam,
            "tau": self.tau,
        }


@dataclass
class EvalReport:
    """Across-fold means plus the per-fold breakdown for one policy."""

    accuracy: float
    avg_cost: float
    brier: float
    brier_selected: float
    fidelity_distribution: dict[str, float]
    per_fold: list[FoldReport] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "avg_cost": self.avg_cost,
            "brier": self.brier,
            "brier_selected": self.brier_selected,
            "fidelity_distribution": dict(self.fidelity_distribution),
            "per_fold": [f.to_json_dict() for f in self.per_fold],
        }

    @classmethod
    def from_folds(cls, folds: Sequence[FoldReport]) -> "EvalReport":
        if not folds:
            raise ValueError("cannot aggregate zero folds")
        dist_keys = folds[0].fidelity_distribution.keys()
        return cls(
            accuracy=float(np.mean([f.accuracy for f in folds])),
            avg_cost=float(np.mean([f.avg_cost for f in folds])),
            brier=float(np.mean([f.brier for f in folds])),
            brier_selected=float(np.mean([f.brier_selected for f in folds])),
            fidelity_distribution={
                k: float(np.mean([f.fidelity_distribution[k] for f in folds]))
                for k in dist_keys
            },
            per_fold=list(folds),
        )


def train_bank(
    records: Iterable[CorrectnessRecord],
    fidelities: Sequence[str],
    *,
    gbr_config: TrainConfig = TrainConfig(),
    calibration: str = "isotonic",
    max_terms: int | None = None,
    sigmoid_first: bool = False,
) -> PredictorBank:
    """Fit the shared vocabulary and one (scorer, calibrator) pair per fidelity.

    The vocabulary sees training questions only (one document per distinct
    qid). Every fidelity must have at least one training record. Calibration
    is one of "isotonic", "temperature", or "none" (raw scores clipped).
    """
    if calibration not in CALIBRATION_METHODS:
        raise ValueError(
            f"unknown calibration method {calibration!r}; "
            f"choose one of {CALIBRATION_METHODS}"
        )
    records = list(records)
    texts: dict[str, str] = {}
    by_fidelity: dict[str, list[CorrectnessRecord]] = {fid: [] for fid in fidelities}
    for rec in records:
        texts.setdefault(rec.qid, rec.question_text)
        if rec.fidelity_id in by_fidelity:
            by_fidelity[rec.fidelity_id].append(rec)
    empty = [fid for fid, recs in by_fidelity.items() if not recs]
    if empty:
        raise ValueError(f"no training records for fidelity level(s) {empty}")

    featurizer = QuestionFeaturizer(max_terms=max_terms)
    featurizer.fit(list(texts.values()))
    X_by_qid = {
        qid: row
        for qid, row in zip(texts, featurizer.transform(list(texts.values())))
    }

    pipelines: dict[str, FidelityPipeline] = {}
    for fid in fidelities:
        recs = by_fidelity[fid]
        X = np.stack([X_by_qid[rec.qid] for rec in recs])
        y = np.asarray([rec.correct for rec in recs], dtype=float)
        model = gbr_config.to_estimator().fit(X, y)
        raw = model.predict(X)
        if sigmoid_first:
            raw = sigmoid(raw)
        if calibration == "isotonic":
            calibrator = IsotonicCalibrator().fit(raw, y)
        elif calibration == "temperature":
            calibrator = TemperatureCalibrator().fit(raw, y)
        else:
            calibrator = ClippingCalibrator().fit(raw, y)
        pipelines[fid] = FidelityPipeline(
            model=model, calibrator=calibrator, sigmoid_first=sigmoid_first
        )
    return PredictorBank(featurizer=featurizer, pipelines=pipelines)


def _group_fold(records: Sequence[CorrectnessRecord]):
    labels: dict[str, dict[str, int]] = {}
    texts: dict[str, str] = {}
    for rec in records:
        labels.setdefault(rec.qid, {})[rec.fidelity_id] = rec.correct
        texts.setdefault(rec.qid, rec.question_text)
    qids = sorted(labels)
    return qids, texts, labels


def evaluate_policy(
    bank: PredictorBank,
    policy: RoutingPolicy,
    test_records: Sequence[CorrectnessRecord],
    costs: Mapping[str, float],
    decision_log: list[tuple[str, RoutingDecision]] | None = None,
) -> FoldReport:
    """Route every test question, then read the logged label at the selected
    fidelity. A selection without a logged label is a hard error."""
    qids, texts, labels = _group_fold(test_records)
    if not qids:
        raise ValueError("empty test fold")
    batch = bank.predict_success_batch([texts[q] for q in qids])

    order = levels_by_cost(costs)
    correct_sum = 0
    cost_sum = 0.0
    counts = {fid: 0 for fid in order}
    sel_probs: list[float] = []
    sel_labels: list[int] = []
    for i, qid in enumerate(qids):
        probs = {fid: float(batch[fid][i]) for fid in order}
        decision = policy.route(qid, probs, costs)
        if decision_log is not None:
            decision_log.append((qid, decision))
        selected = decision.selected
        if selected not in labels[qid]:
            raise CorpusError(f"no logged label for pair {(qid, selected)!r}")
        outcome = labels[qid][selected]
        correct_sum += outcome
        cost_sum += costs[selected]
        counts[selected] += 1
        sel_probs.append(probs[selected])
        sel_labels.append(outcome)

    pooled_probs: list[float] = []
    pooled_labels: list[int] = []
    qid_row = {qid: i for i, qid in enumerate(qids)}
    for rec in test_records:
        if rec.fidelity_id not in batch:
            raise CorpusError(
                f"record {(rec.qid, rec.fidelity_id)!r} names a fidelity the bank "
                "does not cover"
            )
        pooled_probs.append(float(batch[rec.fidelity_id][qid_row[rec.qid]]))
        pooled_labels.append(rec.correct)

    n = len(qids)
    return FoldReport(
        accuracy=correct_sum / n,
        avg_cost=cost_sum / n,
        brier=brier(pooled_probs, pooled_labels),
        brier_selected=brier(sel_probs, sel_labels),
        fidelity_distribution={fid: counts[fid] / n for fid in order},
        n_questions=n,
    )


def grid_search(
    train_folds: Sequence[Sequence[CorrectnessRecord]],
    grid: GridSpec,
    costs: Mapping[str, float],
    *,
    calibration: str = "isotonic",
    max_terms: int | None = None,
    sigmoid_first: bool = False,
    objective_lambda: float = 0.5,
) -> tuple[TrainConfig, PolicyConfig]:
    """Pick (gbr config, lambda, tau) on an inner validation split.

    The last training fold is held out; each candidate is scored by
    mean(correct) - objective_lambda * mean(cost) / 120 on it. Singleton grids
    return their only point without any training.
    """
    if grid.size == 1:
        return grid.gbr_configs[0], PolicyConfig(
            lam=grid.lambda_values[0], tau=grid.tau_values[0]
        )
    if len(train_folds) < 2:
        raise ValueError("grid search needs at least two training folds")
    inner_train = [rec for fold in train_folds[:-1] for rec in fold]
    inner_val = list(train_folds[-1])
    fidelities = levels_by_cost(costs)

    best_key: tuple | None = None
    best: tuple[TrainConfig, PolicyConfig] | None = None
    for cfg_idx, cfg in enumerate(grid.gbr_configs):
        bank = train_bank(
            inner_train,
            fidelities,
            gbr_config=cfg,
            calibration=calibration,
            max_terms=max_terms,
            sigmoid_first=sigmoid_first,
        )
        for lam in grid.lambda_values:
            for tau in grid.tau_values:
                policy_cfg = PolicyConfig(lam=lam, tau=tau)
                report = evaluate_policy(
                    bank, GreedyVoiPolicy(policy_cfg), inner_val, costs
                )
                objective = (
                    report.accuracy - objective_lambda * report.avg_cost / 120.0
                )
                key = (objective, -report.avg_cost, -lam, -tau, -cfg_idx)
                if best_key is None or key > best_key:
                    best_key = key
                    best = (cfg, policy_cfg)
    assert best is not None
    return best


_HEURISTIC_POLICIES = ("voi", "argmax", "accuracy_only", "fixed_threshold", "oracle")


def available_policy_names(profile: CostProfile) -> tuple[str, ...]:
    return _HEURISTIC_POLICIES + tuple(f"fixed:{fid}" for fid in profile.level_ids)


def _default_threshold_target(order: Sequence[str]) -> str:
    if "jpeg_q10" in order:
        return "jpeg_q10"
    return order[-2] if len(order) >= 3 else order[-1]


def _make_policy(
    name: str,
    policy_cfg: PolicyConfig,
    costs: Mapping[str, float],
    true_probs: Mapping[str, Mapping[str, float]] | None,
) -> RoutingPolicy:
    order = levels_by_cost(costs)
    if name == "voi":
        return GreedyVoiPolicy(policy_cfg)
    if name == "argmax":
        return ArgmaxUtilityPolicy(policy_cfg.lam)
    if name == "accuracy_only":
        return AccuracyOnlyPolicy()
    if name == "fixed_threshold":
        return FixedThresholdPolicy(
            base=order[0], target=_default_threshold_target(order)
        )
    if name == "oracle":
        if true_probs is None:
            raise ValueError(
                "the oracle policy needs known true probabilities "
                "(a generated corpus with its truth sidecar and world spec)"
            )
        return OraclePolicy(lam=policy_cfg.lam, true_probs=lambda qid: true_probs[qid])
    if name.startswith("fixed:"):
        fid = name.split(":", 1)[1]
        if fid not in costs:
            raise ValueError(f"unknown fidelity {fid!r} in policy {name!r}")
        return FixedFidelityPolicy(fid)
    raise ValueError(f"unknown policy {name!r}")


def run_cv(
    dataset: Dataset,
    profile: CostProfile,
    *,
    k: int = 5,
    seed: int = 0,
    grid: GridSpec | None = None,
    policies: Sequence[str] = ("voi",),
    calibration: str = "isotonic",
    max_terms: int | None = None,
    sigmoid_first: bool = False,
    true_probs: Mapping[str, Mapping[str, float]] | None = None,
    decision_logs: Mapping[str, list] | None = None,
    on_fold: Callable[[int, PredictorBank, TrainConfig, PolicyConfig], None] | None = None,
) -> dict[str, EvalReport]:
    """Question-level k-fold protocol.

    Per fold: grid search on the training folds only, retrain the bank on all
    of them with the chosen configuration, then evaluate every requested
    policy on the held-out fold. Reports are across-fold means.
    """
    grid = grid or GridSpec()
    costs = normalized_costs(profile)
    folds = assign_folds(dataset, k, seed)
    fold_records: dict[int, list[CorrectnessRecord]] = {i: [] for i in range(k)}
    for rec in dataset:
        fold_records[folds.assignment[rec.qid]].append(rec)

    per_policy: dict[str, list[FoldReport]] = {name: [] for name in policies}
    for i in range(k):
        train_folds = [fold_records[j] for j in range(k) if j != i]
        gbr_cfg, policy_cfg = grid_search(
            train_folds,
            grid,
            costs,
            calibration=calibration,
            max_terms=max_terms,
            sigmoid_first=sigmoid_first,
        )
        bank = train_bank(
            [rec for fold in train_folds for rec in fold],
            levels_by_cost(costs),
            gbr_config=gbr_cfg,
            calibration=calibration,
            max_terms=max_terms,
            sigmoid_first=sigmoid_first,
        )
        if on_fold is not None:
            on_fold(i, bank, gbr_cfg, policy_cfg)
        for name in policies:
            policy = _make_policy(name, policy_cfg, costs, true_probs)
            fold_log: list[tuple[str, RoutingDecision]] | None = (
                [] if decision_logs is not None and name in decision_logs else None
            )
            report = evaluate_policy(
                bank, policy, fold_records[i], costs, decision_log=fold_log
            )
            report.lam = policy_cfg.lam
            report.tau = policy_cfg.tau
            per_policy[name].append(report)
            if fold_log is not None:
                decision_logs[name].extend(
                    (i, policy_cfg.lam, policy_cfg.tau, qid, decision)
                    for qid, decision in fold_log
                )
    return {name: EvalReport.from_folds(reports) for name, reports in per_policy.items()}


def pareto_frontier(
    points: Sequence[tuple[float, float]]
) -> list[tuple[float, float]]:
    """Non-dominated (accuracy, cost) points, sorted by cost.

    A dominates B when acc_A >= acc_B and cost_A <= cost_B with at least one
    strict inequality.
    """

    def dominated(p: tuple[float, float], q: tuple[float, float]) -> bool:
        return (
            q[0] >= p[0]
            and q[1] <= p[1]
            and (q[0] > p[0] or q[1] < p[1])
        )

    kept = [
        p for p in points if not any(dominated(p, q) for q in points if q != p)
    ]
    return sorted(set(kept), key=lambda p: (p[1], -p[0]))


def export_pareto_csv(reports: Mapping[str, EvalReport], path: str | Path) -> None:
    """CSV of every policy's (accuracy, cost) with its frontier membership."""
    points = [(rep.accuracy, rep.avg_cost) for rep in reports.values()]
    frontier = set(pareto_frontier(points))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "accuracy", "avg_cost", "on_frontier"])
        for name in sorted(reports):
            rep = reports[name]
            writer.writerow(
                [
                    name,
                    repr(rep.accuracy),
                    repr(rep.avg_cost),
                    int((rep.accuracy, rep.avg_cost) in frontier),
                ]
            )


def save_reports(reports: Mapping[str, EvalReport], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(reports):
        path = directory / f"report_{name.replace(':', '_')}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(reports[name].to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(path)
    return written
