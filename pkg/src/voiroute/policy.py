"""Fidelity-selection rules and the trained per-fidelity predictor bank.

The greedy escalation rule walks fidelities in ascending cost order and
escalates while the value of information (predicted accuracy gain minus the
trade-off coefficient times the NEXT level's full cost) exceeds the threshold,
stopping at the first rejection. The single-step rule simply maximizes
estimated utility p - lambda * c over all levels. Heuristic baselines and a
known-truth selector round out the comparison set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .boosting import GradientBoostedRegressor
from .calibration import (
    ClippingCalibrator,
    IsotonicCalibrator,
    TemperatureCalibrator,
    sigmoid,
)
from .features import QuestionFeaturizer, Vocabulary


@dataclass(frozen=True)
class PolicyConfig:
    """Cost-accuracy trade-off lambda and greedy escalation threshold tau."""

    lam: float
    tau: float = 0.0
    marginal_cost: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")


@dataclass(frozen=True)
class VoiStep:
    from_id: str
    to_id: str
    value: float
    accepted: bool


@dataclass(frozen=True)
class RoutingDecision:
    """Selected fidelity plus the probability/VOI trace that justified it."""

    selected: str
    probs: dict[str, float]
    voi_trace: tuple[VoiStep, ...]
    cost: float

    def to_json_dict(self) -> dict:
        return {
            "selected": self.selected,
            "cost": self.cost,
            "probs": dict(self.probs),
            "voi_trace": [
                {
                    "from": step.from_id,
                    "to": step.to_id,
                    "voi": step.value,
                    "accepted": step.accepted,
                }
                for step in self.voi_trace
            ],
        }


def voi(p_next: float, p_cur: float, cost_next: float, lam: float) -> float:
    """Value of escalating: accuracy gain minus lambda times the next level's cost."""
    return (p_next - p_cur) - lam * cost_next


def levels_by_cost(costs: Mapping[str, float]) -> list[str]:
    return sorted(costs, key=lambda fid: costs[fid])


def _check_coverage(probs: Mapping[str, float], costs: Mapping[str, float]) -> None:
    missing = [fid for fid in costs if fid not in probs]
    if missing:
        raise ValueError(f"no predicted probability for fidelity level(s) {missing}")


def route_greedy_probs(
    probs: Mapping[str, float],
    costs: Mapping[str, float],
    config: PolicyConfig,
) -> RoutingDecision:
    """Greedy escalation from the cheapest level; stops at the first step
    whose VOI does not exceed tau."""
    _check_coverage(probs, costs)
    order = levels_by_cost(costs)
    current = order[0]
    trace: list[VoiStep] = []
    for candidate in order[1:]:
        cost_term = costs[candidate] - (costs[current] if config.marginal_cost else 0.0)
        value = voi(probs[candidate], probs[current], cost_term, config.lam)
        accepted = value > config.tau
        trace.append(VoiStep(current, candidate, value, accepted))
        if not accepted:
            break
        current = candidate
    return RoutingDecision(
        selected=current,
        probs={fid: float(probs[fid]) for fid in order},
        voi_trace=tuple(trace),
        cost=costs[current],
    )


def route_greedy(
    bank: "PredictorBank",
    question: str,
    config: PolicyConfig,
    costs: Mapping[str, float],
) -> RoutingDecision:
    return route_greedy_probs(bank.predict_success(question), costs, config)


def route_argmax_utility(
    probs: Mapping[str, float], costs: Mapping[str, float], lam: float
) -> str:
    """Single-step selector: argmax of p - lambda * c, ties toward cheaper."""
    _check_coverage(probs, costs)
    best_fid = None
    best_utility = -np.inf
    for fid in levels_by_cost(costs):
        utility = probs[fid] - lam * costs[fid]
        if utility > best_utility:
            best_fid, best_utility = fid, utility
    return best_fid


def route_accuracy_only(probs: Mapping[str, float], costs: Mapping[str, float]) -> str:
    """Highest predicted probability wins; ties toward the cheaper level."""
    return route_argmax_utility(probs, costs, lam=0.0)


def route_fixed_threshold(
    probs: Mapping[str, float],
    base: str,
    target: str,
    cutoff: float = 0.30,
) -> str:
    """Escalate from base to target when the base probability falls below cutoff."""
    return target if probs[base] < cutoff else base


def oracle_select(
    true_probs: Mapping[str, float], costs: Mapping[str, float], lam: float
) -> str:
    """Known-truth utility maximizer, written independently of the deployed
    selector so the two can cross-check each other: ranks every level by
    (-utility, cost) and takes the head."""
    _check_coverage(true_probs, costs)
    ranked = sorted(
        ((-(true_probs[fid] - lam * costs[fid]), costs[fid], fid) for fid in costs),
    )
    return ranked[0][2]


def regret(
    true_probs: Mapping[str, float],
    decision: str,
    costs: Mapping[str, float],
    lam: float,
) -> float:
    """Optimal true utility minus the achieved true utility; always >= 0."""
    utilities = {fid: true_probs[fid] - lam * costs[fid] for fid in costs}
    return max(utilities.values()) - utilities[decision]


@dataclass
class FidelityPipeline:
    """One fidelity's scorer plus calibrator; optionally squashes raw scores
    through a sigmoid before calibration (ablation variant)."""

    model: GradientBoostedRegressor
    calibrator: IsotonicCalibrator | TemperatureCalibrator | ClippingCalibrator
    sigmoid_first: bool = False

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        raw = self.model.predict(X)
        if self.sigmoid_first:
            raw = sigmoid(raw)
        return np.asarray(self.calibrator.predict(raw), dtype=float)


_CALIBRATOR_TYPES = {
    "isotonic": IsotonicCalibrator,
    "temperature": TemperatureCalibrator,
    "none": ClippingCalibrator,
}


class PredictorBank:
    """Shared featurizer plus one (scorer, calibrator) pipeline per fidelity."""

    def __init__(
        self,
        featurizer: QuestionFeaturizer,
        pipelines: Mapping[str, FidelityPipeline],
    ):
        if not pipelines:
            raise ValueError("a predictor bank needs at least one fidelity pipeline")
        self.featurizer = featurizer
        self.pipelines = dict(pipelines)

    @property
    def fidelity_ids(self) -> tuple[str, ...]:
        return tuple(self.pipelines)

    @property
    def vocabulary(self) -> Vocabulary:
        return self.featurizer.vocabulary_

    def predict_success_batch(self, questions: Sequence[str]) -> dict[str, np.ndarray]:
        """Per-fidelity success probabilities for a batch of question texts."""
        X = self.featurizer.transform(questions)
        return {fid: pipe.predict_proba(X) for fid, pipe in self.pipelines.items()}

    def predict_success(self, question: str) -> dict[str, float]:
        batch = self.predict_success_batch([question])
        return {fid: float(p[0]) for fid, p in batch.items()}

    # -- persistence ------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.featurizer.vocabulary_.save(directory / "vocabulary.json")
        manifest: dict = {"fidelities": [], "max_terms": self.featurizer.max_terms}
        for fid, pipe in self.pipelines.items():
            cal_name = next(
                name
                for name, cls in _CALIBRATOR_TYPES.items()
                if isinstance(pipe.calibrator, cls)
            )
            manifest["fidelities"].append(
                {"id": fid, "calibration": cal_name, "sigmoid_first": pipe.sigmoid_first}
            )
            pipe.model.save(directory / f"model_{fid}.json")
            with open(directory / f"calibrator_{fid}.json", "w", encoding="utf-8") as fh:
                json.dump(pipe.calibrator.to_json_dict(), fh, sort_keys=True)
        with open(directory / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory: str | Path) -> "PredictorBank":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no bank manifest at {manifest_path}")
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        featurizer = QuestionFeaturizer(max_terms=manifest.get("max_terms"))
        featurizer.vocabulary_ = Vocabulary.load(directory / "vocabulary.json")
        featurizer._idf = featurizer.vocabulary_.idf_by_index()
        pipelines: dict[str, FidelityPipeline] = {}
        for entry in manifest["fidelities"]:
            fid = entry["id"]
            model = GradientBoostedRegressor.load(directory / f"model_{fid}.json")
            with open(directory / f"calibrator_{fid}.json", encoding="utf-8") as fh:
                cal_obj = json.load(fh)
            calibrator = _CALIBRATOR_TYPES[entry["calibration"]].from_json_dict(cal_obj)
            pipelines[fid] = FidelityPipeline(
                model=model,
                calibrator=calibrator,
                sigmoid_first=bool(entry.get("sigmoid_first", False)),
            )
        return cls(featurizer=featurizer, pipelines=pipelines)


# -- policy objects used by the evaluation harness -------------------------


class RoutingPolicy:
    """Base: a policy maps one question's probabilities to a decision."""

    def route(
        self,
        qid: str,
        probs: Mapping[str, float],
        costs: Mapping[str, float],
    ) -> RoutingDecision:
        raise NotImplementedError

    @staticmethod
    def _plain_decision(
        selected: str, probs: Mapping[str, float], costs: Mapping[str, float]
    ) -> RoutingDecision:
        return RoutingDecision(
            selected=selected,
            probs={fid: float(p) for fid, p in probs.items()},
            voi_trace=(),
            cost=costs[selected],
        )


@dataclass
class GreedyVoiPolicy(RoutingPolicy):
    config: PolicyConfig

    def route(self, qid, probs, costs) -> RoutingDecision:
        return route_greedy_probs(probs, costs, self.config)


@dataclass
class ArgmaxUtilityPolicy(RoutingPolicy):
    lam: float

    def route(self, qid, probs, costs) -> RoutingDecision:
        return self._plain_decision(route_argmax_utility(probs, costs, self.lam), probs, costs)


@dataclass
class AccuracyOnlyPolicy(RoutingPolicy):
    def route(self, qid, probs, costs) -> RoutingDecision:
        return self._plain_decision(route_accuracy_only(probs, costs), probs, costs)


@dataclass
class FixedThresholdPolicy(RoutingPolicy):
    base: str
    target: str
    cutoff: float = 0.30

    def route(self, qid, probs, costs) -> RoutingDecision:
        selected = route_fixed_threshold(probs, self.base, self.target, self.cutoff)
        return self._plain_decision(selected, probs, costs)


@dataclass
class FixedFidelityPolicy(RoutingPolicy):
    fidelity_id: str

    def route(self, qid, probs, costs) -> RoutingDecision:
        return self._plain_decision(self.fidelity_id, probs, costs)


@dataclass
class OraclePolicy(RoutingPolicy):
    """Selects on known true probabilities instead of the bank's estimates."""

    lam: float
    true_probs: Callable[[str], Mapping[str, float]]

    def route(self, qid, probs, costs) -> RoutingDecision:
        truth = self.true_probs(qid)
        selected = oracle_select(truth, costs, self.lam)
        return self._plain_decision(selected, truth, costs)
