"""Convert score matrices into label decisions by re-optimization.

The shared decision rule assigns each instance to ``argmax_j w_j * M_ij``
for a weight vector w; solvers search for weights (or a class-grouping
tree) minimizing total misclassification cost on training data. Finding
the exact optimum is intractable, so all solvers are heuristics.

Argmax and argmin ties break to the lowest class index throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import CostMatrix, DataError, LabelAssignment, ScoreMatrix


@dataclass(frozen=True)
class WeightVector:
    """Per-class multiplicative weights; finite, not all zero."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size < 2:
            raise DataError("weight vector must have one entry per class (>= 2)")
        if not np.all(np.isfinite(weights)):
            raise DataError("weights must be finite")
        if np.all(weights == 0.0):
            raise DataError("weight vector must have at least one nonzero entry")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    def to_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights]}

    @classmethod
    def from_dict(cls, payload: dict) -> "WeightVector":
        return cls(np.array(payload["weights"], dtype=float))


def weighted_decide(scores: ScoreMatrix, w: WeightVector) -> LabelAssignment:
    """Assign each instance to the class maximizing ``w_j * score_ij``."""
    if scores.class_count != w.class_count:
        raise DataError("score matrix and weight vector disagree on class count")
    preds = np.argmax(scores.scores * w.weights, axis=1)
    return LabelAssignment(predictions=preds, class_count=scores.class_count)


def objective(
    scores: ScoreMatrix, labels: np.ndarray, costs: CostMatrix, w: WeightVector
) -> float:
    """Total cost of the weighted decision rule on the given data."""
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != scores.n_instances:
        raise DataError("labels and score matrix disagree on instance count")
    if costs.class_count != scores.class_count:
        raise DataError("cost matrix and score matrix disagree on class count")
    preds = weighted_decide(scores, w).predictions
    return float(costs.costs[labels, preds].sum())


def _objective_raw(
    scores: np.ndarray, labels: np.ndarray, costs: np.ndarray, w: np.ndarray
) -> float:
    preds = np.argmax(scores * w, axis=1)
    return float(costs[labels, preds].sum())


def threshold_moving(
    pos_scores: np.ndarray,
    neg_scores: np.ndarray,
    cost_fn: Callable[[int, int], float],
) -> float:
    """Scan all decision thresholds of a binary scorer and return the best.

    An instance is predicted positive when its score is strictly greater
    than the threshold. Candidates are the midpoints between consecutive
    distinct scores plus -inf and +inf sentinels, so every achievable
    confusion table is visited. ``cost_fn(fp_count, fn_count)`` scores a
    table; ties break toward the larger threshold (fewer positives).
    """
    pos = np.sort(np.asarray(pos_scores, dtype=float))
    neg = np.sort(np.asarray(neg_scores, dtype=float))
    if pos.size + neg.size == 0:
        raise DataError("threshold moving needs at least one score")
    distinct = np.unique(np.concatenate([pos, neg]))
    candidates = [-math.inf]
    candidates.extend((distinct[:-1] + distinct[1:]) / 2.0)
    candidates.append(math.inf)

    best_threshold = candidates[0]
    best_cost = math.inf
    for threshold in candidates:
        fp = int(neg.size - np.searchsorted(neg, threshold, side="right"))
        fn = int(np.searchsorted(pos, threshold, side="right"))
        cost = cost_fn(fp, fn)
        if cost <= best_cost:
            best_cost = cost
            best_threshold = threshold
    return float(best_threshold)


def _class_order(labels: np.ndarray, class_count: int) -> list[int]:
    counts = np.bincount(labels, minlength=class_count)
    return sorted(range(class_count), key=lambda k: (-counts[k], k))


def lf_optimize(
    scores: ScoreMatrix, labels: np.ndarray, costs: CostMatrix
) -> WeightVector:
    """Greedy per-class weight fixing.

    The largest class is given weight 1. Each remaining class (descending
    instance count) is then weighed against the classes already fixed: its
    weight is chosen by scanning the candidate values where its weighted
    column overtakes the fixed-group maximum, minimizing the restricted
    total cost. Ties prefer the smaller weight (fewer instances captured
    by the incoming class).
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != scores.n_instances:
        raise DataError("labels and score matrix disagree on instance count")
    if costs.class_count != scores.class_count:
        raise DataError("cost matrix and score matrix disagree on class count")
    c = scores.class_count
    if np.bincount(labels, minlength=c).min() == 0:
        raise DataError("every class must be present in the training labels")

    order = _class_order(labels, c)
    w = np.zeros(c)
    w[order[0]] = 1.0
    fixed = [order[0]]
    for cls in order[1:]:
        member = np.isin(labels, fixed) | (labels == cls)
        sub = scores.scores[member]
        sub_labels = labels[member]
        masked = np.full_like(sub, -np.inf)
        masked[:, fixed] = sub[:, fixed] * w[fixed]
        fixed_best = masked.max(axis=1)
        fixed_winner = np.argmax(masked, axis=1)
        incoming = sub[:, cls]

        nonzero = incoming != 0.0
        crossings = np.unique(fixed_best[nonzero] / incoming[nonzero])
        crossings = crossings[np.isfinite(crossings)]
        if crossings.size == 0:
            trials = np.array([1.0])
        else:
            trials = np.concatenate(
                [
                    [crossings[0] - 1.0],
                    (crossings[:-1] + crossings[1:]) / 2.0,
                    [crossings[-1] + 1.0],
                ]
            )
        best_w = trials[0]
        best_cost = math.inf
        for trial in trials:
            assigned = np.where(trial * incoming > fixed_best, cls, fixed_winner)
            cost = float(costs.costs[sub_labels, assigned].sum())
            if cost < best_cost:
                best_cost = cost
                best_w = trial
        w[cls] = best_w
        fixed.append(cls)
    return WeightVector(w)


@dataclass(frozen=True)
class MetaClassNode:
    """Node of a recursive class-grouping tree.

    A leaf carries a single class. An internal node compares the summed
    scores of its two groups: instances route to ``above`` when
    (sum of above-group columns) - (sum of below-group columns) exceeds
    the threshold.
    """

    classes: tuple[int, ...]
    class_index: Optional[int] = None
    threshold: Optional[float] = None
    above: Optional["MetaClassNode"] = None
    below: Optional["MetaClassNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.class_index is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"class": int(self.class_index)}
        return {
            "threshold": float(self.threshold),
            "above": self.above.to_dict(),
            "below": self.below.to_dict(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "MetaClassNode":
        if "class" in payload:
            k = int(payload["class"])
            return cls(classes=(k,), class_index=k)
        above = cls.from_dict(payload["above"])
        below = cls.from_dict(payload["below"])
        return cls(
            classes=tuple(sorted(above.classes + below.classes)),
            threshold=float(payload["threshold"]),
            above=above,
            below=below,
        )


@dataclass(frozen=True)
class MetaClassTree:
    """Binary grouping tree whose leaves partition the class set."""

    root: MetaClassNode
    class_count: int

    def __post_init__(self):
        leaves: list[int] = []

        def collect(node: MetaClassNode):
            if node.is_leaf:
                leaves.append(node.class_index)
            else:
                collect(node.above)
                collect(node.below)

        collect(self.root)
        if sorted(leaves) != list(range(self.class_count)):
            raise DataError("tree leaves must partition the class set exactly")

    def decode(self, scores: ScoreMatrix) -> LabelAssignment:
        """Route every instance down the tree to a leaf class."""
        if scores.class_count != self.class_count:
            raise DataError("score matrix and tree disagree on class count")
        matrix = scores.scores
        preds = np.empty(matrix.shape[0], dtype=int)

        def route(node: MetaClassNode, idx: np.ndarray):
            if node.is_leaf:
                preds[idx] = node.class_index
                return
            diff = matrix[np.ix_(idx, node.above.classes)].sum(axis=1) - matrix[
                np.ix_(idx, node.below.classes)
            ].sum(axis=1)
            go_above = diff > node.threshold
            if idx[go_above].size:
                route(node.above, idx[go_above])
            if idx[~go_above].size:
                route(node.below, idx[~go_above])

        route(self.root, np.arange(matrix.shape[0]))
        return LabelAssignment(predictions=preds, class_count=self.class_count)

    def to_dict(self) -> dict:
        return {"class_count": self.class_count, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, payload: dict) -> "MetaClassTree":
        return cls(
            root=MetaClassNode.from_dict(payload["root"]),
            class_count=int(payload["class_count"]),
        )


def _split_groups(
    class_list: list[int], counts: np.ndarray
) -> tuple[list[int], list[int]]:
    # Greedy balance of instance counts: heaviest class first, assigned to
    # the currently lighter group, ties to the first group.
    ordered = sorted(class_list, key=lambda k: (-counts[k], k))
    group_a: list[int] = []
    group_b: list[int] = []
    size_a = size_b = 0
    for k in ordered:
        if size_a <= size_b:
            group_a.append(k)
            size_a += counts[k]
        else:
            group_b.append(k)
            size_b += counts[k]
    return sorted(group_a), sorted(group_b)


def _group_cost(
    costs: np.ndarray, counts: np.ndarray, src: list[int], dst: list[int]
) -> float:
    # Instance-weighted mean cost of classifying a src-group instance into
    # the dst group.
    weights = np.outer(counts[src], counts[dst]).astype(float)
    return float((costs[np.ix_(src, dst)] * weights).sum() / weights.sum())


def metaclass_optimize(
    scores: ScoreMatrix, labels: np.ndarray, costs: CostMatrix
) -> MetaClassTree:
    """Build a class-grouping decision tree by recursive binary splits.

    At each node the classes split into two groups of approximately equal
    instance mass; the node's threshold is picked by threshold moving on
    the difference of group score sums, using instance-weighted mean group
    costs. Recursion stops at singleton leaves.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != scores.n_instances:
        raise DataError("labels and score matrix disagree on instance count")
    if costs.class_count != scores.class_count:
        raise DataError("cost matrix and score matrix disagree on class count")
    c = scores.class_count
    counts = np.bincount(labels, minlength=c)
    if counts.min() == 0:
        raise DataError("every class must be present in the training labels")
    matrix = scores.scores

    def build(class_list: list[int]) -> MetaClassNode:
        if len(class_list) == 1:
            k = class_list[0]
            return MetaClassNode(classes=(k,), class_index=k)
        group_a, group_b = _split_groups(class_list, counts)
        member = np.isin(labels, class_list)
        diff = matrix[:, group_a].sum(axis=1) - matrix[:, group_b].sum(axis=1)
        in_a = member & np.isin(labels, group_a)
        in_b = member & np.isin(labels, group_b)
        cost_ab = _group_cost(costs.costs, counts, group_a, group_b)
        cost_ba = _group_cost(costs.costs, counts, group_b, group_a)
        threshold = threshold_moving(
            diff[in_a], diff[in_b], lambda fp, fn: fp * cost_ba + fn * cost_ab
        )
        return MetaClassNode(
            classes=tuple(sorted(class_list)),
            threshold=threshold,
            above=build(group_a),
            below=build(group_b),
        )

    return MetaClassTree(root=build(list(range(c))), class_count=c)


@dataclass(frozen=True)
class GaConfig:
    """Genetic-algorithm and pattern-search settings.

    Defaults: population 50 with the all-ones vector seeded, 100
    generations, binary tournament selection, uniform crossover at rate
    0.8, per-gene Gaussian mutation (sigma 0.1, rate 1/c) clamped to the
    search box, single-individual elitism; then compass pattern search
    from the best individual (step 0.25, halved on failed sweeps, stop at
    step < 1e-4 or 200 sweeps).
    """

    population_size: int = 50
    generations: int = 100
    crossover_rate: float = 0.8
    mutation_sigma: float = 0.1
    mutation_rate: Optional[float] = None  # None means 1/class_count
    tournament_size: int = 2
    elite_count: int = 1
    lower: float = -1.0
    upper: float = 1.0
    pattern_initial_step: float = 0.25
    pattern_step_tol: float = 1e-4
    pattern_max_sweeps: int = 200

    def __post_init__(self):
        if self.population_size < 2 or self.generations < 0:
            raise DataError("population must be >= 2 and generations >= 0")
        if not self.lower < self.upper:
            raise DataError("search box must have lower < upper")

    def to_dict(self) -> dict:
        return {
            "population_size": self.population_size,
            "generations": self.generations,
            "crossover_rate": self.crossover_rate,
            "mutation_sigma": self.mutation_sigma,
            "mutation_rate": self.mutation_rate,
            "tournament_size": self.tournament_size,
            "elite_count": self.elite_count,
            "lower": self.lower,
            "upper": self.upper,
            "pattern_initial_step": self.pattern_initial_step,
            "pattern_step_tol": self.pattern_step_tol,
            "pattern_max_sweeps": self.pattern_max_sweeps,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "GaConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(payload) - known
        if unknown:
            raise DataError(f"unknown GA config keys: {sorted(unknown)}")
        return cls(**payload)


def _pattern_search(
    fn: Callable[[np.ndarray], float],
    start: np.ndarray,
    config: GaConfig,
) -> np.ndarray:
    """Compass search: poll coordinate +/- step, halve the step on failure."""
    x = start.copy()
    fx = fn(x)
    step = config.pattern_initial_step
    sweeps = 0
    while step >= config.pattern_step_tol and sweeps < config.pattern_max_sweeps:
        sweeps += 1
        best_candidate = None
        best_value = fx
        for i in range(x.size):
            for delta in (step, -step):
                y = x.copy()
                y[i] = min(max(y[i] + delta, config.lower), config.upper)
                fy = fn(y)
                if fy < best_value:
                    best_value = fy
                    best_candidate = y
        if best_candidate is None:
            step /= 2.0
        else:
            x, fx = best_candidate, best_value
    return x


def ga_optimize(
    scores: ScoreMatrix,
    labels: np.ndarray,
    costs: CostMatrix,
    config: GaConfig | None = None,
    seed: int | list[int] = 0,
) -> WeightVector:
    """Search the weight box with a genetic algorithm, then pattern search.

    The all-ones vector (the plain-argmax rule) is seeded into the initial
    population, elitism preserves the incumbent across generations, and
    pattern search only accepts improvements, so the returned objective is
    never worse than the best initial individual. Deterministic for a
    fixed seed.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.shape[0] != scores.n_instances:
        raise DataError("labels and score matrix disagree on instance count")
    if costs.class_count != scores.class_count:
        raise DataError("cost matrix and score matrix disagree on class count")
    cfg = config or GaConfig()
    c = scores.class_count
    matrix = scores.scores
    cost_arr = costs.costs
    mutation_rate = cfg.mutation_rate if cfg.mutation_rate is not None else 1.0 / c

    def fitness(w: np.ndarray) -> float:
        return _objective_raw(matrix, labels, cost_arr, w)

    rng = np.random.default_rng(seed)
    population = rng.uniform(cfg.lower, cfg.upper, size=(cfg.population_size, c))
    population[0] = np.clip(np.ones(c), cfg.lower, cfg.upper)
    values = np.array([fitness(w) for w in population])

    def tournament() -> np.ndarray:
        contenders = rng.integers(0, cfg.population_size, size=cfg.tournament_size)
        winner = contenders[np.argmin(values[contenders])]
        return population[winner]

    for _ in range(cfg.generations):
        elite_idx = np.argsort(values, kind="stable")[: cfg.elite_count]
        offspring = [population[i].copy() for i in elite_idx]
        while len(offspring) < cfg.population_size:
            parent_a = tournament()
            parent_b = tournament()
            if rng.random() < cfg.crossover_rate:
                mask = rng.random(c) < 0.5
                child = np.where(mask, parent_a, parent_b)
            else:
                child = parent_a.copy()
            mutate = rng.random(c) < mutation_rate
            if np.any(mutate):
                child = child + mutate * rng.normal(0.0, cfg.mutation_sigma, size=c)
                child = np.clip(child, cfg.lower, cfg.upper)
            offspring.append(child)
        population = np.array(offspring)
        values = np.array([fitness(w) for w in population])

    best = population[int(np.argmin(values))]
    refined = _pattern_search(fitness, best, cfg)
    return WeightVector(refined)
