"""Score-to-probability calibration and calibration-quality metrics.

Isotonic regression (pool-adjacent-violators) is the default calibrator;
temperature scaling is shipped as an ablation control and raw clipping as the
no-calibration baseline. Equal raw scores are weight-merged before isotonic
fitting so conflicting labels at one score become a single averaged point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError


def pava(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto non-decreasing sequences.

    Classic pool-adjacent-violators: walk left to right, merging each new
    point into the previous block while block means decrease.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError("values must be 1-d")
    if weights is None:
        w = np.ones_like(v)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != v.shape:
            raise ValueError("values and weights must have equal length")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
    n = v.size
    if n == 0:
        return np.empty(0)
    block_sum = np.empty(n)
    block_weight = np.empty(n)
    block_count = np.empty(n, dtype=np.intp)
    block_mean = np.empty(n)
    top = -1
    for i in range(n):
        top += 1
        block_sum[top] = w[i] * v[i]
        block_weight[top] = w[i]
        block_count[top] = 1
        block_mean[top] = v[i]
        while top > 0 and block_mean[top - 1] > block_mean[top]:
            block_sum[top - 1] += block_sum[top]
            block_weight[top - 1] += block_weight[top]
            block_count[top - 1] += block_count[top]
            block_mean[top - 1] = block_sum[top - 1] / block_weight[top - 1]
            top -= 1
    return np.repeat(block_mean[: top + 1], block_count[: top + 1])


class IsotonicCalibrator(BaseEstimator, TransformerMixin):
    """Monotone piecewise-linear map from raw scores to probabilities.

    Knots are the (score, fitted value) pairs left after weight-merging equal
    scores, running PAVA on the merged label means, and collapsing each run of
    equal fitted values to its endpoints. Scores outside the knot range clip
    to the boundary values.
    """

    def fit(self, scores, labels) -> "IsotonicCalibrator":
        s = np.asarray(scores, dtype=float)
        y = np.asarray(labels, dtype=float)
        if s.ndim != 1 or s.shape != y.shape:
            raise ValueError("scores and labels must be 1-d and equal length")
        if s.size == 0:
            raise ValueError("cannot fit a calibrator on an empty sample")
        uniq, inverse = np.unique(s, return_inverse=True)
        weight = np.bincount(inverse).astype(float)
        mean_label = np.bincount(inverse, weights=y) / weight
        fitted = pava(mean_label, weight)
        changed = fitted[1:] != fitted[:-1]
        keep = np.r_[True, changed] | np.r_[changed, True]
        self.knot_x_ = uniq[keep]
        self.knot_y_ = fitted[keep]
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "knot_x_"):
            raise NotFittedError("IsotonicCalibrator is not fitted yet")

    def predict(self, scores) -> np.ndarray | float:
        """Linear interpolation between knots, clipping outside the range."""
        self._check_fitted()
        out = np.interp(scores, self.knot_x_, self.knot_y_)
        if np.isscalar(scores):
            return float(out)
        return out

    def transform(self, scores) -> np.ndarray | float:
        return self.predict(scores)

    def to_json_dict(self) -> dict:
        self._check_fitted()
        return {"knot_x": self.knot_x_.tolist(), "knot_y": self.knot_y_.tolist()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "IsotonicCalibrator":
        cal = cls()
        cal.knot_x_ = np.asarray(obj["knot_x"], dtype=float)
        cal.knot_y_ = np.asarray(obj["knot_y"], dtype=float)
        return cal


def fit_isotonic(scores, labels) -> IsotonicCalibrator:
    return IsotonicCalibrator().fit(scores, labels)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class TemperatureCalibrator(BaseEstimator, TransformerMixin):
    """Negative-control calibrator: p = sigmoid(score / T).

    T minimizes the mean negative log-likelihood, found by golden-section
    search on ln T over [-5, 5] to 1e-6. Labels that are all identical leave T
    unidentifiable and raise.
    """

    def fit(self, scores, labels) -> "TemperatureCalibrator":
        s = np.asarray(scores, dtype=float)
        y = np.asarray(labels, dtype=float)
        if s.ndim != 1 or s.shape != y.shape:
            raise ValueError("scores and labels must be 1-d and equal length")
        if s.size == 0:
            raise ValueError("cannot fit a calibrator on an empty sample")
        if np.all(y == y[0]):
            raise ValueError(
                "labels are all identical, so the temperature is unidentifiable; "
                "fall back to an isotonic or constant calibrator"
            )

        def nll(log_t: float) -> float:
            z = s / math.exp(log_t)
            return float(np.mean(np.logaddexp(0.0, z) - y * z))

        lo, hi = -5.0, 5.0
        c = hi - _GOLDEN * (hi - lo)
        d = lo + _GOLDEN * (hi - lo)
        fc, fd = nll(c), nll(d)
        while hi - lo > 1e-6:
            if fc < fd:
                hi, d, fd = d, c, fc
                c = hi - _GOLDEN * (hi - lo)
                fc = nll(c)
            else:
                lo, c, fc = c, d, fd
                d = lo + _GOLDEN * (hi - lo)
                fd = nll(d)
        self.temperature_ = math.exp((lo + hi) / 2.0)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "temperature_"):
            raise NotFittedError("TemperatureCalibrator is not fitted yet")

    def predict(self, scores) -> np.ndarray | float:
        self._check_fitted()
        out = sigmoid(np.asarray(scores, dtype=float) / self.temperature_)
        if np.isscalar(scores):
            return float(out)
        return out

    def transform(self, scores) -> np.ndarray | float:
        return self.predict(scores)

    def to_json_dict(self) -> dict:
        self._check_fitted()
        return {"temperature": self.temperature_}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TemperatureCalibrator":
        cal = cls()
        cal.temperature_ = float(obj["temperature"])
        return cal


def fit_temperature(scores, labels) -> TemperatureCalibrator:
    return TemperatureCalibrator().fit(scores, labels)


class ClippingCalibrator(BaseEstimator, TransformerMixin):
    """No-calibration baseline: clip raw scores into [0, 1]."""

    def fit(self, scores=None, labels=None) -> "ClippingCalibrator":
        return self

    def predict(self, scores) -> np.ndarray | float:
        out = np.clip(np.asarray(scores, dtype=float), 0.0, 1.0)
        if np.isscalar(scores):
            return float(out)
        return out

    def transform(self, scores) -> np.ndarray | float:
        return self.predict(scores)

    def to_json_dict(self) -> dict:
        return {}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ClippingCalibrator":
        return cls()


def brier(probs, labels) -> float:
    """Mean squared error between predicted probabilities and binary labels."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.ndim != 1 or p.shape != y.shape:
        raise ValueError("probs and labels must be 1-d and equal length")
    if p.size == 0:
        raise ValueError("brier is undefined on an empty sample")
    return float(np.mean((p - y) ** 2))


def ece(probs, labels, n_bins: int = 10) -> float:
    """Expected calibration error over equal-width bins; empty bins add 0."""
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.ndim != 1 or p.shape != y.shape:
        raise ValueError("probs and labels must be 1-d and equal length")
    if p.size == 0:
        raise ValueError("ece is undefined on an empty sample")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    bins = np.minimum((p * n_bins).astype(int), n_bins - 1)
    total = 0.0
    for b in range(n_bins):
        mask = bins == b
        count = int(np.count_nonzero(mask))
        if count == 0:
            continue
        gap = abs(float(p[mask].mean()) - float(y[mask].mean()))
        total += (count / p.size) * gap
    return total


@dataclass(frozen=True)
class CalibrationReport:
    """Brier score and ECE over one evaluation sample."""

    brier: float
    ece: float
    n: int

    @classmethod
    def from_predictions(cls, probs, labels) -> "CalibrationReport":
        p = np.asarray(probs, dtype=float)
        return cls(brier=brier(p, labels), ece=ece(p, labels), n=int(p.size))

    def to_json_dict(self) -> dict:
        return {"brier": self.brier, "ece": self.ece, "n": self.n}
