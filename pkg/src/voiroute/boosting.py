"""Least-squares gradient-boosted regression trees built from scratch.

Each boosting round fits a depth-limited CART regression tree to the current
residuals with exact split search: candidate thresholds are midpoints between
consecutive distinct sorted feature values, ties break toward the lowest
feature index and then the lowest threshold, and a split is accepted only if
it strictly reduces squared error. Training is deterministic; the shipped
configuration uses no subsampling, so the seed is kept only for forward
compatibility.

Split search runs over a transposed (features x samples) layout with the
per-feature sample order presorted once per fit. A numba kernel handles the
inner scan when numba is importable; the numpy implementation is the
reference and the fallback, with identical selection semantics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

_MIN_GAIN = 1e-12

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class TrainConfig:
    """Boosting hyperparameters (defaults match the shipped configuration)."""

    n_estimators: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")

    def to_estimator(self) -> "GradientBoostedRegressor":
        return GradientBoostedRegressor(
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            seed=self.seed,
        )


@dataclass
class RegressionTree:
    """Flat-array binary tree; feature < 0 marks a leaf; value <= threshold goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        stack: list[tuple[int, np.ndarray]] = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            feat = self.feature[node]
            if feat < 0:
                out[idx] = self.value[node]
                continue
            goes_left = X[idx, feat] <= self.threshold[node]
            stack.append((self.left[node], idx[goes_left]))
            stack.append((self.right[node], idx[~goes_left]))
        return out

    def to_dict(self) -> dict:
        def walk(node: int) -> dict:
            if self.feature[node] < 0:
                return {"value": float(self.value[node])}
            return {
                "feature": int(self.feature[node]),
                "threshold": float(self.threshold[node]),
                "left": walk(int(self.left[node])),
                "right": walk(int(self.right[node])),
            }

        return walk(0)

    @classmethod
    def from_dict(cls, obj: dict) -> "RegressionTree":
        feature: list[int] = []
        threshold: list[float] = []
        left: list[int] = []
        right: list[int] = []
        value: list[float] = []

        def walk(node: dict) -> int:
            idx = len(feature)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            if "value" in node:
                value[idx] = float(node["value"])
            else:
                feature[idx] = int(node["feature"])
                threshold[idx] = float(node["threshold"])
                left[idx] = walk(node["left"])
                right[idx] = walk(node["right"])
            return idx

        walk(obj)
        return cls(
            feature=np.asarray(feature, dtype=np.int32),
            threshold=np.asarray(threshold),
            left=np.asarray(left, dtype=np.int32),
            right=np.asarray(right, dtype=np.int32),
            value=np.asarray(value),
        )


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    # adjacent floats can round the midpoint onto hi, which would route both
    # sides left; fall back to the lower value
    if not (lo <= mid < hi):
        mid = lo
    return mid


def _best_split_sorted(
    vals: np.ndarray,
    ys: np.ndarray,
    feature_ids: np.ndarray,
    valid: np.ndarray | None = None,
) -> tuple[int, float] | None:
    """Exact best split given per-feature-row ascending values and targets.

    vals, ys: (d, m) where row j holds the node's samples sorted by feature
    feature_ids[j]; feature_ids must be ascending. The single flat argmax
    scans features in order and positions ascending within each feature, so
    ties resolve to the lowest feature index, then the lowest threshold.
    Returns (feature index, threshold) or None when no split strictly reduces
    squared error.
    """
    d, m = vals.shape
    if m < 2 or d == 0:
        return None
    total = float(ys[0].sum())
    left_sum = np.cumsum(ys, axis=1)[:, :-1]
    left_cnt = np.arange(1, m, dtype=float)
    right_sum = total - left_sum
    gain = (
        left_sum * left_sum / left_cnt
        + right_sum * right_sum / (m - left_cnt)
        - (total * total) / m
    )
    if valid is None:
        valid = vals[:, :-1] < vals[:, 1:]
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    j, pos = divmod(flat, m - 1)
    if not gain[j, pos] > _MIN_GAIN:
        return None
    return int(feature_ids[j]), _midpoint(float(vals[j, pos]), float(vals[j, pos + 1]))


if _HAVE_NUMBA:

    @njit(cache=True)
    def _scan_split_kernel(XT, resid, sorted_ids, total, min_gain):
        """Single-pass scan mirroring _best_split_sorted's selection rule."""
        d, m = sorted_ids.shape
        best_gain = min_gain
        best_j = -1
        best_pos = -1
        total_term = total * total / m
        for j in range(d):
            left_sum = 0.0
            row = XT[j]
            ids = sorted_ids[j]
            for pos in range(m - 1):
                left_sum += resid[ids[pos]]
                if row[ids[pos]] < row[ids[pos + 1]]:
                    left_cnt = pos + 1.0
                    right_sum = total - left_sum
                    gain = (
                        left_sum * left_sum / left_cnt
                        + right_sum * right_sum / (m - left_cnt)
                        - total_term
                    )
                    if gain > best_gain:
                        best_gain = gain
                        best_j = j
                        best_pos = pos
        return best_j, best_pos

    @njit(cache=True)
    def _partition_kernel(sorted_ids, feat_vals, threshold):
        """Stable partition of every per-feature order by the chosen split."""
        d, m = sorted_ids.shape
        n_left = 0
        for i in range(m):
            if feat_vals[sorted_ids[0, i]] <= threshold:
                n_left += 1
        left = np.empty((d, n_left), dtype=sorted_ids.dtype)
        right = np.empty((d, m - n_left), dtype=sorted_ids.dtype)
        for j in range(d):
            a = 0
            b = 0
            for i in range(m):
                sid = sorted_ids[j, i]
                if feat_vals[sid] <= threshold:
                    left[j, a] = sid
                    a += 1
                else:
                    right[j, b] = sid
                    b += 1
        return left, right


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    features: Sequence[int] | None = None,
    min_samples_split: int = 2,
) -> tuple[int, float] | None:
    """Best (feature, threshold) by total squared error over a two-way partition.

    Thresholds are midpoints between consecutive distinct sorted values; ties
    break toward the lowest feature index, then the lowest threshold. Returns
    None when no split strictly reduces error (that signals a leaf).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be (n, d) and y must be (n,) with matching n")
    if X.shape[0] < min_samples_split:
        return None
    feature_ids = (
        np.arange(X.shape[1]) if features is None else np.asarray(sorted(features))
    )
    if feature_ids.size == 0:
        return None
    sub = np.ascontiguousarray(X[:, feature_ids].T)
    order = np.argsort(sub, axis=1, kind="stable")
    vals = np.take_along_axis(sub, order, axis=1)
    return _best_split_sorted(vals, y[order], feature_ids)


class _TreeBuilder:
    """Grows one tree on residuals over a transposed (features x samples)
    layout; the root's presorted sample order is shared across all rounds."""

    def __init__(
        self,
        XT: np.ndarray,
        residuals: np.ndarray,
        max_depth: int,
        min_samples_split: int,
    ):
        self.XT = XT
        self.residuals = residuals
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.train_pred = np.empty(XT.shape[1])
        self._feature_ids = np.arange(XT.shape[0])

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def _leaf(self, node: int, sample_ids: np.ndarray) -> None:
        leaf_value = float(self.residuals[sample_ids].mean())
        self.value[node] = leaf_value
        self.train_pred[sample_ids] = leaf_value

    def _find_split(self, sorted_ids: np.ndarray) -> tuple[int, float] | None:
        if _HAVE_NUMBA:
            total = float(self.residuals[sorted_ids[0]].sum())
            j, pos = _scan_split_kernel(
                self.XT, self.residuals, sorted_ids, total, _MIN_GAIN
            )
            if j < 0:
                return None
            lo = float(self.XT[j, sorted_ids[j, pos]])
            hi = float(self.XT[j, sorted_ids[j, pos + 1]])
            return j, _midpoint(lo, hi)
        vals = np.take_along_axis(self.XT, sorted_ids, axis=1)
        return _best_split_sorted(
            vals, self.residuals[sorted_ids], self._feature_ids
        )

    def build(self, sorted_ids: np.ndarray, depth: int) -> int:
        node = self._new_node()
        m = sorted_ids.shape[1]
        samples = sorted_ids[0]
        if depth >= self.max_depth or m < self.min_samples_split:
            self._leaf(node, samples)
            return node
        split = self._find_split(sorted_ids)
        if split is None:
            self._leaf(node, samples)
            return node
        feat, thr = split
        self.feature[node] = feat
        self.threshold[node] = thr
        if _HAVE_NUMBA:
            left_ids, right_ids = _partition_kernel(sorted_ids, self.XT[feat], thr)
        else:
            mask = (self.XT[feat] <= thr)[sorted_ids]
            n_left = int(np.count_nonzero(mask[0]))
            left_ids = sorted_ids[mask].reshape(sorted_ids.shape[0], n_left)
            right_ids = sorted_ids[~mask].reshape(sorted_ids.shape[0], m - n_left)
        self.left[node] = self.build(left_ids, depth + 1)
        self.right[node] = self.build(right_ids, depth + 1)
        return node

    def finish(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value),
        )


class GradientBoostedRegressor(BaseEstimator, RegressorMixin):
    """L2 boosting: base prediction is the target mean, each round adds a
    residual tree scaled by the learning rate."""

    def __init__(
        self,
        n_estimators: int = 100,
        learning_rate: float = 0.1,
        max_depth: int = 3,
        min_samples_split: int = 2,
        seed: int = 0,
    ):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            min_samples_split=self.min_samples_split,
            seed=self.seed,
        )

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GradientBoostedRegressor":
        self._config()
        X = np.ascontiguousarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or X.shape[1] == 0:
            raise ValueError("X must be a 2-d feature matrix with >= 1 column")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("y must be 1-d and aligned with X rows")
        if X.shape[0] == 0:
            raise ValueError("training set must be non-empty")
        self.n_features_in_ = X.shape[1]
        self.base_value_ = float(y.mean())
        pred = np.full(X.shape[0], self.base_value_)
        # the per-feature sample order never changes across boosting rounds
        XT = np.ascontiguousarray(X.T)
        root_sorted = np.argsort(XT, axis=1, kind="stable")
        trees: list[RegressionTree] = []
        for _ in range(self.n_estimators):
            builder = _TreeBuilder(
                XT, y - pred, self.max_depth, self.min_samples_split
            )
            builder.build(root_sorted, depth=0)
            trees.append(builder.finish())
            pred += self.learning_rate * builder.train_pred
        self.trees_ = trees
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "trees_"):
            raise NotFittedError("GradientBoostedRegressor is not fitted yet")

    def predict(self, X: np.ndarray) -> np.ndarray:
        self._check_fitted()
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X must be (n, {self.n_features_in_}), got shape {X.shape}"
            )
        out = np.full(X.shape[0], self.base_value_)
        for tree in self.trees_:
            out += self.learning_rate * tree.predict(X)
        return out

    def to_json_dict(self) -> dict:
        self._check_fitted()
        return {
            "base_value": self.base_value_,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features_in_,
            "trees": [tree.to_dict() for tree in self.trees_],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "GradientBoostedRegressor":
        model = cls(n_estimators=len(obj["trees"]), learning_rate=float(obj["learning_rate"]))
        model.base_value_ = float(obj["base_value"])
        model.n_features_in_ = int(obj["n_features"])
        model.trees_ = [RegressionTree.from_dict(t) for t in obj["trees"]]
        return model

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "GradientBoostedRegressor":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))
