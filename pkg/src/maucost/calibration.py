"""Score calibration and cost-minimal decisions.

Binary calibrators (a two-parameter sigmoid and isotonic regression via
pool-adjacent-violators) are fitted one-vs-rest per score column, combined
into a row-stochastic probability matrix by normalization, and decisions
are taken by minimizing expected cost per instance.

Sign convention of the sigmoid: ``p = 1 / (1 + exp(a*h + b))``, so a
calibrator in which larger scores mean higher probability has ``a < 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import (
    CostMatrix,
    DataError,
    LabelAssignment,
    NumericalError,
    PriorVector,
    ScoreMatrix,
    empirical_priors,
)

_GRAD_TOL = 1e-8
_DECREASE_TOL = 1e-12
_MAX_NEWTON_ITER = 200


@dataclass(frozen=True)
class PlattParams:
    """Sigmoid slope and intercept."""

    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise DataError("sigmoid parameters must be finite")

    def to_dict(self) -> dict:
        return {"a": float(self.a), "b": float(self.b)}

    @classmethod
    def from_dict(cls, payload: dict) -> "PlattParams":
        return cls(a=float(payload["a"]), b=float(payload["b"]))


@dataclass(frozen=True)
class PlattTargets:
    """Regularized regression targets for sigmoid fitting.

    Positives are pulled toward (n_pos + 1)/(n_pos + 2) instead of 1 and
    negatives toward 1/(n_neg + 2) instead of 0, which keeps the optimum
    finite even on separable data.
    """

    t_pos: float
    t_neg: float
    n_pos: int
    n_neg: int

    def __post_init__(self):
        if not (0.0 < self.t_neg < 0.5 < self.t_pos < 1.0):
            raise DataError("targets must satisfy 0 < t_neg < 0.5 < t_pos < 1")

    @classmethod
    def from_counts(cls, n_pos: int, n_neg: int) -> "PlattTargets":
        if n_pos < 1 or n_neg < 1:
            raise DataError("both classes must be present to fit targets")
        return cls(
            t_pos=(n_pos + 1.0) / (n_pos + 2.0),
            t_neg=1.0 / (n_neg + 2.0),
            n_pos=n_pos,
            n_neg=n_neg,
        )


def platt_objective(
    a: float, b: float, scores: np.ndarray, targets: np.ndarray
) -> float:
    """Cross-entropy of the sigmoid against the regularized targets.

    Evaluated in a form that never exponentiates a large argument:
    ``F = sum(log(1 + exp(z)) - (1 - t) * z)`` with ``z = a*h + b``.
    """
    z = a * scores + b
    return float(np.sum(np.logaddexp(0.0, z) - (1.0 - targets) * z))


def platt_gradient(
    a: float, b: float, scores: np.ndarray, targets: np.ndarray
) -> np.ndarray:
    """Analytic gradient of the sigmoid-fitting objective in (a, b)."""
    z = a * scores + b
    residual = targets - expit(-z)
    return np.array([np.dot(residual, scores), residual.sum()])


def _platt_hessian(a: float, b: float, scores: np.ndarray) -> np.ndarray:
    p = expit(-(a * scores + b))
    w = p * (1.0 - p)
    h_aa = np.dot(w, scores * scores)
    h_ab = np.dot(w, scores)
    h_bb = w.sum()
    return np.array([[h_aa, h_ab], [h_ab, h_bb]])


def fit_platt(scores: np.ndarray, binary_labels: np.ndarray) -> PlattParams:
    """Fit the sigmoid by Newton's method with backtracking.

    The objective is convex, so the returned parameters are the global
    minimizer up to the stopping tolerances (max gradient component 1e-8,
    or objective decrease below 1e-12 per step).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(binary_labels, dtype=int)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise DataError("scores and labels must be equal-length vectors")
    if not np.all(np.isfinite(scores)):
        raise DataError("sigmoid fitting requires finite scores")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos + n_neg != labels.size:
        raise DataError("binary labels must be 0 or 1")
    reg = PlattTargets.from_counts(n_pos, n_neg)
    targets = np.where(labels == 1, reg.t_pos, reg.t_neg)

    a = 0.0
    b = float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    value = platt_objective(a, b, scores, targets)
    for _ in range(_MAX_NEWTON_ITER):
        grad = platt_gradient(a, b, scores, targets)
        if np.max(np.abs(grad)) <= _GRAD_TOL:
            return PlattParams(a, b)
        hess = _platt_hessian(a, b, scores)
        step_dir = None
        if np.all(np.isfinite(hess)):
            try:
                step_dir = np.linalg.solve(hess + 1e-12 * np.eye(2), -grad)
            except np.linalg.LinAlgError:
                step_dir = None
        if step_dir is None or not np.all(np.isfinite(step_dir)):
            step_dir = -grad
        descent = float(np.dot(grad, step_dir))
        if descent >= 0.0:
            step_dir = -grad
            descent = float(np.dot(grad, step_dir))
        # Armijo backtracking; bail out if no finite improving point exists
        # along this direction (degenerate geometry, e.g. huge scores).
        step = 1.0
        new_value = None
        while step >= 1e-12:
            cand_a = a + step * step_dir[0]
            cand_b = b + step * step_dir[1]
            cand = platt_objective(cand_a, cand_b, scores, targets)
            if np.isfinite(cand) and cand <= value + 1e-4 * step * descent:
                new_value = cand
                break
            step *= 0.5
        if new_value is None:
            return PlattParams(a, b)
        a, b = a + step * step_dir[0], b + step * step_dir[1]
        if value - new_value < _DECREASE_TOL:
            return PlattParams(a, b)
        value = new_value
    raise NumericalError("sigmoid fit did not converge")


def apply_platt(params: PlattParams, scores: np.ndarray) -> np.ndarray:
    """Map scores through the fitted sigmoid; outputs lie strictly in (0, 1)."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise DataError("sigmoid application requires finite scores")
    return expit(-(params.a * scores + params.b))


@dataclass(frozen=True)
class IsotonicModel:
    """Stepwise-constant calibration map from pool-adjacent-violators.

    ``plateau_values[k]`` is the probability of the k-th pooled block;
    ``breakpoints`` holds the midpoints between adjacent blocks' score
    ranges. Scores outside the training range clamp to the first or last
    plateau.
    """

    breakpoints: np.ndarray
    plateau_values: np.ndarray

    def __post_init__(self):
        breaks = np.asarray(self.breakpoints, dtype=float)
        values = np.asarray(self.plateau_values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise DataError("isotonic model needs at least one plateau")
        if breaks.shape != (values.size - 1,):
            raise DataError("breakpoint count must be plateau count minus one")
        if breaks.size and np.any(np.diff(breaks) <= 0):
            raise DataError("breakpoints must be strictly ascending")
        if np.any(np.diff(values) < 0):
            raise DataError("plateau values must be non-decreasing")
        if np.any(values < 0) or np.any(values > 1):
            raise DataError("plateau values must lie in [0, 1]")
        breaks.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "breakpoints", breaks)
        object.__setattr__(self, "plateau_values", values)

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(v) for v in self.breakpoints],
            "plateau_values": [float(v) for v in self.plateau_values],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "IsotonicModel":
        return cls(
            breakpoints=np.array(payload["breakpoints"], dtype=float),
            plateau_values=np.array(payload["plateau_values"], dtype=float),
        )


def fit_pav(scores: np.ndarray, binary_labels: np.ndarray) -> IsotonicModel:
    """Isotonic (monotone least-squares) calibration via pool-adjacent-violators.

    Instances are sorted by score; tied scores are merged into one weighted
    block up front so the fitted map is a function of the score alone. Any
    adjacent pair of blocks whose means are out of order is pooled into its
    weighted mean until the sequence is non-decreasing.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(binary_labels, dtype=float)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise DataError("scores and labels must be equal-length vectors")
    if not np.all(np.isfinite(scores)):
        raise DataError("isotonic fitting requires finite scores")
    if not np.all((labels == 0) | (labels == 1)):
        raise DataError("binary labels must be 0 or 1")
    if not (np.any(labels == 0) and np.any(labels == 1)):
        raise DataError("both classes must be present to fit")

    unique_scores, inverse = np.unique(scores, return_inverse=True)
    label_sums = np.bincount(inverse, weights=labels)
    weights = np.bincount(inverse).astype(float)

    # Each stack entry: [label_sum, weight, score_lo, score_hi]
    stack: list[list[float]] = []
    for s, total, w in zip(unique_scores, label_sums, weights):
        stack.append([total, w, s, s])
        while len(stack) > 1:
            prev, curr = stack[-2], stack[-1]
            if prev[0] * curr[1] <= curr[0] * prev[1]:  # prev mean <= curr mean
                break
            merged = [prev[0] + curr[0], prev[1] + curr[1], prev[2], curr[3]]
            stack.pop()
            stack[-1] = merged
    values = np.array([total / w for total, w, _, _ in stack])
    breaks = np.array(
        [(stack[k][3] + stack[k + 1][2]) / 2.0 for k in range(len(stack) - 1)]
    )
    return IsotonicModel(breakpoints=breaks, plateau_values=values)


def apply_pav(model: IsotonicModel, scores: np.ndarray) -> np.ndarray:
    """Evaluate the stepwise-constant map; out-of-range scores clamp."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise DataError("isotonic application requires finite scores")
    idx = np.searchsorted(model.breakpoints, scores, side="right")
    return model.plateau_values[idx]


@dataclass(frozen=True)
class ProbabilityMatrix:
    """Row-stochastic posterior probabilities, one row per instance."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise DataError("probability matrix must be 2-dimensional")
        if np.any(probs < 0) or np.any(probs > 1):
            raise DataError("probabilities must lie in [0, 1]")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("every probability row must sum to 1 within 1e-9")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def n_instances(self) -> int:
        return self.probs.shape[0]

    @property
    def class_count(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class MatrixCalibrator:
    """One binary calibrator per class column plus a prior fallback.

    The fallback priors replace rows whose calibrated mass is numerically
    zero, so the decision rule degrades to the prior-only rule instead of
    dividing by zero.
    """

    method: str
    models: tuple
    priors: PriorVector

    def __post_init__(self):
        if self.method not in ("platt", "pav"):
            raise DataError(f"unknown calibration method {self.method!r}")
        if len(self.models) != self.priors.class_count:
            raise DataError("need exactly one calibrator per class")

    @property
    def class_count(self) -> int:
        return self.priors.class_count

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "models": [m.to_dict() for m in self.models],
            "priors": [float(p) for p in self.priors.priors],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MatrixCalibrator":
        method = payload["method"]
        model_cls = PlattParams if method == "platt" else IsotonicModel
        return cls(
            method=method,
            models=tuple(model_cls.from_dict(m) for m in payload["models"]),
            priors=PriorVector(np.array(payload["priors"], dtype=float)),
        )


def fit_calibrator(
    train_scores: ScoreMatrix, train_labels: np.ndarray, method: str
) -> MatrixCalibrator:
    """Fit one-vs-rest binary calibrators, one per score column."""
    labels = np.asarray(train_labels, dtype=int)
    if labels.shape[0] != train_scores.n_instances:
        raise DataError("labels and score matrix disagree on instance count")
    c = train_scores.class_count
    priors = empirical_priors(labels, c)
    if method == "platt":
        fit = fit_platt
    elif method == "pav":
        fit = fit_pav
    else:
        raise DataError(f"unknown calibration method {method!r}")
    models = tuple(
        fit(train_scores.scores[:, j], (labels == j).astype(int)) for j in range(c)
    )
    return MatrixCalibrator(method=method, models=models, priors=priors)


def apply_calibrator(
    calibrator: MatrixCalibrator, scores: ScoreMatrix
) -> ProbabilityMatrix:
    """Calibrate each column, then normalize rows to sum to one."""
    if scores.class_count != calibrator.class_count:
        raise DataError("score matrix and calibrator disagree on class count")
    apply = apply_platt if calibrator.method == "platt" else apply_pav
    raw = np.column_stack(
        [
            apply(calibrator.models[j], scores.scores[:, j])
            for j in range(calibrator.class_count)
        ]
    )
    row_sums = raw.sum(axis=1)
    degenerate = row_sums < 1e-12
    if np.any(degenerate):
        raw[degenerate] = calibrator.priors.priors
        row_sums[degenerate] = 1.0
    return ProbabilityMatrix(raw / row_sums[:, None])


def calibrate_matrix(
    train_scores: ScoreMatrix,
    train_labels: np.ndarray,
    test_scores: ScoreMatrix,
    method: str,
) -> ProbabilityMatrix:
    """Fit per-column calibrators on training data and calibrate test scores."""
    if train_scores.class_count != test_scores.class_count:
        raise DataError("train and test score matrices disagree on class count")
    return apply_calibrator(
        fit_calibrator(train_scores, train_labels, method), test_scores
    )


def bayes_decide(probs: ProbabilityMatrix, costs: CostMatrix) -> LabelAssignment:
    """Pick the class with minimal expected cost per instance.

    The expected cost of predicting class i is the probability-weighted sum
    over true classes j of ``costs[j, i]``. Ties break to the lowest class
    index.
    """
    if probs.class_count != costs.class_count:
        raise DataError("probability matrix and cost matrix disagree on classes")
    expected = probs.probs @ costs.costs
    return LabelAssignment(
        predictions=np.argmin(expected, axis=1), class_count=probs.class_count
    )
