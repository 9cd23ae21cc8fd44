"""Stratified folds and regression models for performance prediction.

The forest is built from scratch (CART regression trees on bootstrap
samples, per-split random feature subsets) so that tree internals are
available to the exact Shapley attribution. KNN and RBF kernel ridge
(the svm surrogate) standardize features with train-only statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ConfigurationError
from .seeding import derive_seed

Key = tuple[int, int, int]

MODEL_KINDS = ("random_forest", "knn", "kernel")
MODEL_LABELS = {
    "random_forest": "RF",
    "knn": "KNN",
    "kernel": "kernel (svm-surrogate)",
}


# ---------------------------------------------------------------------------
# folds

@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_keys: tuple[Key, ...]
    test_keys: tuple[Key, ...]


def make_folds(keys: Sequence[Key], k: int, seed: int) -> list[FoldSplit]:
    """Stratified folds: each test fold holds exactly one instance per problem.

    Slot assignment comes from a seeded permutation of each problem's
    instances, so every instance appears in exactly one test fold.
    """
    if k < 2:
        raise ConfigurationError("k must be >= 2 (k=1 would leave an empty train set)")
    by_problem: dict[int, list[Key]] = {}
    for key in keys:
        by_problem.setdefault(key[0], []).append(key)
    counts = {p: len(ks) for p, ks in by_problem.items()}
    if any(c != k for c in counts.values()):
        raise ConfigurationError(
            f"every problem needs exactly k={k} instances; got counts {counts}"
        )
    rng = np.random.default_rng(seed)
    slots: dict[Key, int] = {}
    for problem in sorted(by_problem):
        members = sorted(by_problem[problem])
        perm = rng.permutation(k)
        for slot, key in zip(perm, members):
            slots[key] = int(slot)
    all_keys = sorted(keys)
    folds = []
    for fold_id in range(1, k + 1):
        test = tuple(key for key in all_keys if slots[key] == fold_id - 1)
        train = tuple(key for key in all_keys if slots[key] != fold_id - 1)
        folds.append(FoldSplit(fold_id=fold_id, train_keys=train, test_keys=test))
    return folds


# ---------------------------------------------------------------------------
# CART regression trees / random forest

@dataclass(eq=False)
class RegressionTree:
    """Flat array representation; feature[i] == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            idx = np.nonzero(active)[0]
            nd = node[idx]
            go_left = X[idx, self.feature[nd]] <= self.threshold[nd]
            node[idx] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]


class _TreeBuilder:
    def __init__(self, X, y, rng, min_leaf, max_depth, n_sub):
        self.X, self.y = X, y
        self.rng = rng
        self.min_leaf = min_leaf
        self.max_depth = max_depth
        self.n_sub = n_sub
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self, idx: np.ndarray, depth: int) -> int:
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(self.y[idx].mean()))
        y = self.y[idx]
        if (
            len(idx) < 2 * self.min_leaf
            or (self.max_depth is not None and depth >= self.max_depth)
            or np.all(y == y[0])
        ):
            return node
        split = self._best_split(idx)
        if split is None:
            return node
        j, thr = split
        mask = self.X[idx, j] <= thr
        self.feature[node] = j
        self.threshold[node] = thr
        left_child = self.build(idx[mask], depth + 1)
        right_child = self.build(idx[~mask], depth + 1)
        self.left[node] = left_child
        self.right[node] = right_child
        return node

    def _best_split(self, idx: np.ndarray):
        n_features = self.X.shape[1]
        chosen = np.sort(self.rng.choice(n_features, size=self.n_sub, replace=False))
        y = self.y[idx]
        n = len(idx)
        parent_sse = float(np.sum((y - y.mean()) ** 2))
        best = None
        best_sse = parent_sse
        for j in chosen:
            xs = self.X[idx, j]
            order = np.argsort(xs, kind="stable")
            xs_sorted = xs[order]
            ys_sorted = y[order]
            s1 = np.cumsum(ys_sorted)
            s2 = np.cumsum(ys_sorted**2)
            sizes = np.arange(1, n)  # left sizes at split positions
            sse_left = s2[:-1] - s1[:-1] ** 2 / sizes
            sse_right = (s2[-1] - s2[:-1]) - (s1[-1] - s1[:-1]) ** 2 / (n - sizes)
            total = sse_left + sse_right
            valid = (
                (sizes >= self.min_leaf)
                & (sizes <= n - self.min_leaf)
                & (xs_sorted[:-1] < xs_sorted[1:])
            )
            if not valid.any():
                continue
            total = np.where(valid, total, np.inf)
            pos = int(np.argmin(total))  # first minimum: lowest threshold wins ties
            if total[pos] < best_sse:
                best_sse = float(total[pos])
                thr = 0.5 * (xs_sorted[pos] + xs_sorted[pos + 1])
                best = (int(j), float(thr))
        return best

    def finish(self) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=int),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=int),
            right=np.asarray(self.right, dtype=int),
            value=np.asarray(self.value, dtype=float),
        )


@dataclass(eq=False)
class RandomForestModel:
    trees: list[RegressionTree]
    n_features: int
    kind: str = field(default="random_forest")

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += tree.predict(X)
        return out / len(self.trees)


def fit_random_forest(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_trees: int = 100,
    min_leaf: int = 2,
    max_depth: int | None = None,
    bootstrap: bool = True,
    seed: int = 0,
) -> RandomForestModel:
    """CART ensemble; per-split feature subsets of size ceil(m/3)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = X.shape
    if n != len(y) or n < 2:
        raise ConfigurationError("need matching X/y with at least 2 rows")
    n_sub = math.ceil(m / 3)
    trees = []
    for t in range(n_trees):
        rng = np.random.default_rng(derive_seed(seed, t))
        idx = rng.integers(0, n, n) if bootstrap else np.arange(n)
        builder = _TreeBuilder(X, y, rng, min_leaf, max_depth, n_sub)
        builder.build(np.asarray(idx), 0)
        trees.append(builder.finish())
    return RandomForestModel(trees=trees, n_features=m)


# ---------------------------------------------------------------------------
# standardized-feature models

def _standardize_params(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


@dataclass(eq=False)
class KnnModel:
    mean: np.ndarray
    std: np.ndarray
    X_train: np.ndarray
    y_train: np.ndarray
    k_neighbors: int
    kind: str = field(default="knn")

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        dists = cdist(Z, self.X_train)
        out = np.empty(Z.shape[0])
        for i in range(Z.shape[0]):
            # stable sort keeps the lowest training index on distance ties
            nearest = np.argsort(dists[i], kind="stable")[: self.k_neighbors]
            out[i] = self.y_train[nearest].mean()
        return out


def fit_knn(X: np.ndarray, y: np.ndarray, k_neighbors: int = 5) -> KnnModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if k_neighbors > X.shape[0]:
        raise ConfigurationError(
            f"k_neighbors {k_neighbors} exceeds training size {X.shape[0]}"
        )
    if k_neighbors < 1:
        raise ConfigurationError("k_neighbors must be >= 1")
    mean, std = _standardize_params(X)
    return KnnModel(mean=mean, std=std, X_train=(X - mean) / std, y_train=y,
                    k_neighbors=k_neighbors)


@dataclass(eq=False)
class KernelRidgeModel:
    """RBF kernel ridge; the svm surrogate family."""

    mean: np.ndarray
    std: np.ndarray
    X_train: np.ndarray
    coef: np.ndarray
    bandwidth: float
    y_mean: float
    kind: str = field(default="kernel")

    def predict(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=float) - self.mean) / self.std
        sq = cdist(Z, self.X_train, "sqeuclidean")
        K = np.exp(-sq / (2.0 * self.bandwidth**2))
        return K @ self.coef + self.y_mean


def fit_kernel(
    X: np.ndarray,
    y: np.ndarray,
    *,
    penalty: float = 1e-3,
    bandwidth: float | None = None,
) -> KernelRidgeModel:
    if penalty <= 0:
        raise ConfigurationError("ridge penalty must be positive")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mean, std = _standardize_params(X)
    Z = (X - mean) / std
    if bandwidth is None:
        dists = pdist(Z)
        bandwidth = float(np.median(dists)) if len(dists) else 1.0
        if bandwidth <= 0:
            bandwidth = 1.0
    sq = cdist(Z, Z, "sqeuclidean")
    K = np.exp(-sq / (2.0 * bandwidth**2))
    y_mean = float(y.mean())
    coef = np.linalg.solve(K + penalty * np.eye(len(y)), y - y_mean)
    return KernelRidgeModel(mean=mean, std=std, X_train=Z, coef=coef,
                            bandwidth=bandwidth, y_mean=y_mean)


def fit_model(kind: str, X, y, params: dict | None = None, seed: int = 0):
    params = dict(params or {})
    if kind == "random_forest":
        return fit_random_forest(X, y, seed=seed, **params)
    if kind == "knn":
        return fit_knn(X, y, **params)
    if kind == "kernel":
        return fit_kernel(X, y, **params)
    raise ConfigurationError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


# ---------------------------------------------------------------------------
# metrics

@dataclass(frozen=True)
class ModelMetrics:
    mae: float
    r2: float


def evaluate_model(model, X_test: np.ndarray, y_test: np.ndarray) -> ModelMetrics:
    pred = model.predict(np.asarray(X_test, dtype=float))
    y_test = np.asarray(y_test, dtype=float)
    mae = float(np.mean(np.abs(pred - y_test)))
    sse = float(np.sum((pred - y_test) ** 2))
    sst = float(np.sum((y_test - y_test.mean()) ** 2))
    if sst <= 0:
        r2 = 1.0 if sse == 0 else 0.0
    else:
        r2 = 1.0 - sse / sst
    return ModelMetrics(mae=mae, r2=r2)
