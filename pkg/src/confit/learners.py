"""Pluggable regression models for the unconstrained training step: a
closed-form ridge (exact affine range projection, the learner the convergence
theory needs) and a from-scratch deterministic gradient-boosted tree ensemble
(the experimental learner).

Fitting a model to a target vector IS the projection onto the model's range,
so `range_projection_fit` is provided as an explicit alias of `fit`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import LossSpec, gradient, loss_value

LEARNER_KINDS = ("ridge", "gbt")


@dataclass(frozen=True)
class LearnerSpec:
    kind: str
    ridge_lambda: float = 0.0
    n_trees: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    seed: int = 0  # reserved for stochastic variants; fitting is exact and needs no RNG

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {LEARNER_KINDS}")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")
        if self.n_trees < 1 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise ValueError("tree count, depth and min leaf size must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning rate must be in (0, 1]")


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        idx = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            leafy = self.feature[idx] < 0
            if leafy.all():
                return self.value[idx]
            live = ~leafy
            nodes = idx[live]
            go_left = x[live, self.feature[nodes]] <= self.threshold[nodes]
            idx[live] = np.where(go_left, self.left[nodes], self.right[nodes])

    def leaf_ids(self, x: np.ndarray) -> np.ndarray:
        idx = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            leafy = self.feature[idx] < 0
            if leafy.all():
                return idx
            live = ~leafy
            nodes = idx[live]
            go_left = x[live, self.feature[nodes]] <= self.threshold[nodes]
            idx[live] = np.where(go_left, self.left[nodes], self.right[nodes])


@dataclass
class FittedModel:
    spec: LearnerSpec
    loss: LossSpec
    d: int
    theta: np.ndarray | None = None
    init: float = 0.0
    trees: list[_Tree] = field(default_factory=list)
    training_loss: float = 0.0
    train_prediction: np.ndarray | None = None


def fit(spec: LearnerSpec, x: np.ndarray, target: np.ndarray, loss: LossSpec) -> FittedModel:
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.ndim != 2 or target.ndim != 1 or x.shape[0] != target.shape[0]:
        raise ValueError(f"incompatible shapes: x {x.shape}, target {target.shape}")
    if not np.isfinite(x).all():
        raise ValueError("feature matrix contains non-finite entries")
    if spec.kind == "ridge":
        model = _fit_ridge(spec, x, target, loss)
    else:
        model = _fit_gbt(spec, x, target, loss)
    model.train_prediction = predict(model, x)
    model.training_loss = loss_value(loss, model.train_prediction, target)
    return model


def range_projection_fit(spec: LearnerSpec, x, target, loss: LossSpec) -> FittedModel:
    """Alias of `fit`, named for its role: projection of the target onto the
    set of outputs the model can produce."""
    return fit(spec, x, target, loss)


def predict(model: FittedModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise ValueError(f"expected {model.d} feature columns, got shape {x.shape}")
    if model.spec.kind == "ridge":
        return np.column_stack([np.ones(x.shape[0]), x]) @ model.theta
    out = np.full(x.shape[0], model.init)
    for tree in model.trees:
        out += model.spec.learning_rate * tree.apply(x)
    return out


def _fit_ridge(spec: LearnerSpec, x, target, loss) -> FittedModel:
    """Exact minimizer of the squared loss plus lambda * ||weights||^2 with an
    unpenalized intercept (documented approximation when the run loss is
    mae/huber)."""
    g = np.column_stack([np.ones(x.shape[0]), x])
    gram = g.T @ g
    penalty = np.eye(g.shape[1])
    penalty[0, 0] = 0.0
    m = gram + spec.ridge_lambda * penalty
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError(
            "singular normal equations; set ridge_lambda > 0 or drop collinear features"
        ) from None
    rhs = g.T @ target
    theta = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return FittedModel(spec=spec, loss=loss, d=x.shape[1], theta=theta)


def _leaf_value(loss: LossSpec, residual: np.ndarray) -> float:
    """Loss-optimal constant for one leaf: argmin_c sum g(residual_i - c).

    Using the exact per-leaf line search (not the mean of pseudo-residuals)
    makes the training loss non-increasing for any learning rate in (0, 1].
    """
    if loss.kind == "mse":
        return float(residual.mean())
    if loss.kind == "mae":
        return float(np.median(residual))
    lo, hi = float(residual.min()), float(residual.max())
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if gradient(loss, residual - mid).sum() > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _fit_tree(x, grad_target, residual, loss, max_depth, min_leaf) -> _Tree:
    """Exact greedy regression tree: structure chosen by squared-error gain on
    the gradient targets, leaf values by line search on the true residuals."""
    n, d = x.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def best_split(idx):
        gi = grad_target[idx]
        ni = idx.size
        if ni < 2 * min_leaf:
            return None
        tot = gi.sum()
        base = tot * tot / ni
        best_gain, best_f, best_thr = 1e-12, -1, 0.0
        for f in range(d):
            xv = x[idx, f]
            order = np.argsort(xv, kind="stable")
            xs = xv[order]
            cs = np.cumsum(gi[order])
            nl = np.arange(1, ni)
            valid = (xs[1:] != xs[:-1]) & (nl >= min_leaf) & (ni - nl >= min_leaf)
            if not valid.any():
                continue
            sl = cs[:-1]
            gain = np.where(valid, sl * sl / nl + (tot - sl) ** 2 / (ni - nl) - base, -np.inf)
            j = int(np.argmax(gain))
            if gain[j] > best_gain:  # strict: ties keep the lowest feature index
                best_gain, best_f, best_thr = gain[j], f, 0.5 * (xs[j] + xs[j + 1])
        return None if best_f < 0 else (best_f, best_thr)

    def build(idx, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        split = best_split(idx) if depth < max_depth else None
        if split is None:
            value[node] = _leaf_value(loss, residual[idx])
            return node
        f, thr = split
        feature[node] = f
        threshold[node] = thr
        mask = x[idx, f] <= thr
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(n), 0)
    return _Tree(np.array(feature), np.array(threshold), np.array(left, dtype=np.int64),
                 np.array(right, dtype=np.int64), np.array(value))


def _fit_gbt(spec: LearnerSpec, x, target, loss) -> FittedModel:
    current = np.full(x.shape[0], target.mean())
    trees: list[_Tree] = []
    for _ in range(spec.n_trees):
        residual = target - current
        grad_target = 0.5 * gradient(loss, residual) if loss.kind != "mae" else np.sign(residual)
        tree = _fit_tree(x, grad_target, residual, loss, spec.max_depth, spec.min_samples_leaf)
        current = current + spec.learning_rate * tree.apply(x)
        trees.append(tree)
    return FittedModel(spec=spec, loss=loss, d=x.shape[1],
                       init=float(target.mean()), trees=trees)


def training_curve(spec: LearnerSpec, x, target, loss: LossSpec) -> np.ndarray:
    """Training loss after each boosting round (diagnostic; gbt only)."""
    if spec.kind != "gbt":
        raise ValueError("training_curve is defined for gbt learners")
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    current = np.full(x.shape[0], target.mean())
    losses = []
    for _ in range(spec.n_trees):
        residual = target - current
        grad_target = 0.5 * gradient(loss, residual) if loss.kind != "mae" else np.sign(residual)
        tree = _fit_tree(x, grad_target, residual, loss, spec.max_depth, spec.min_samples_leaf)
        current = current + spec.learning_rate * tree.apply(x)
        losses.append(loss_value(loss, current, target))
    return np.array(losses)
