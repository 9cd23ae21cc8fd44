"""Shapley attributions of performance predictions (meta-representations).

Two estimators over an interventional (marginal) value function with a
finite background set:

* ``tree_shap``: exact, for the from-scratch forest. Works leaf by leaf:
  a leaf with path features U is reached by coalition S and background b
  iff every path condition is met by x (feature in S) or by b (feature
  not in S). Features that both or neither satisfy collapse, leaving a
  closed-form weight p!q!/(p+q+1)! where p counts x-only and q counts
  b-only features among U minus the attributed one.
* ``sampling_shap``: model-agnostic permutation sampling with antithetic
  permutation pairs and cycled background rows.

Both satisfy efficiency (base + sum(phi) = prediction) exactly up to FP
accumulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .models import RandomForestModel, RegressionTree, fit_model

Key = tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class ShapMetaRepresentation:
    key: Key | None
    base_value: float
    phi: np.ndarray
    prediction: float
    stderr: np.ndarray | None = None

    @property
    def efficiency_gap(self) -> float:
        return abs(self.base_value + float(np.sum(self.phi)) - self.prediction)


@dataclass(frozen=True)
class FeaturePortfolio:
    size: int
    feature_names: tuple[str, ...]
    source_model_kind: str
    importances: tuple[float, ...]


# ---------------------------------------------------------------------------
# exact attribution for tree ensembles

def _shapley_weight_table(max_features: int) -> np.ndarray:
    """w[p, q] = p! q! / (p+q+1)! computed exactly via binomials."""
    size = max_features + 1
    table = np.zeros((size, size))
    for p in range(size):
        for q in range(size):
            table[p, q] = 1.0 / ((p + q + 1) * math.comb(p + q, p))
    return table


def _leaf_paths(tree: RegressionTree):
    """Leaves as (value, path features, lower bounds, upper bounds).

    Bounds are per distinct feature on the root-to-leaf path; a value v
    satisfies the path iff lo < v <= hi.
    """
    paths = []

    def rec(node: int, bounds: dict[int, tuple[float, float]]):
        feat = int(tree.feature[node])
        if feat < 0:
            feats = np.array(sorted(bounds), dtype=int)
            lo = np.array([bounds[j][0] for j in feats])
            hi = np.array([bounds[j][1] for j in feats])
            paths.append((float(tree.value[node]), feats, lo, hi))
            return
        thr = float(tree.threshold[node])
        old = bounds.get(feat, (-math.inf, math.inf))
        left_bounds = dict(bounds)
        left_bounds[feat] = (old[0], min(old[1], thr))
        rec(int(tree.left[node]), left_bounds)
        right_bounds = dict(bounds)
        right_bounds[feat] = (max(old[0], thr), old[1])
        rec(int(tree.right[node]), right_bounds)

    rec(0, {})
    return paths


def _accumulate_tree(phi: np.ndarray, tree_paths, X: np.ndarray, B: np.ndarray,
                     weights: np.ndarray) -> None:
    for value, feats, lo, hi in tree_paths:
        if len(feats) == 0:
            continue  # unconditional leaf appears in both v(S+i) and v(S)
        C = (B[:, feats] > lo[None, :]) & (B[:, feats] <= hi[None, :])
        A = (X[:, feats] > lo[None, :]) & (X[:, feats] <= hi[None, :])
        Cn, An = ~C, ~A
        a16, an16 = A.astype(np.int16), An.astype(np.int16)
        c16t, cn16t = C.astype(np.int16).T, Cn.astype(np.int16).T
        alive = (an16 @ cn16t) == 0          # no feature failed by both sides
        P = a16 @ cn16t                      # passed only by x, per (x, b)
        Q = an16 @ c16t                      # passed only by background
        wx = weights[np.maximum(P - 1, 0), Q]
        wb = weights[P, np.maximum(Q - 1, 0)]
        for t, f in enumerate(feats):
            sel_x = alive & A[:, t][:, None] & Cn[:, t][None, :]
            sel_b = alive & An[:, t][:, None] & C[:, t][None, :]
            phi[:, f] += value * ((wx * sel_x).sum(axis=1) - (wb * sel_b).sum(axis=1))


def tree_shap_batch(
    model: RandomForestModel,
    X: np.ndarray,
    background: np.ndarray,
    keys: Sequence[Key] | None = None,
) -> list[ShapMetaRepresentation]:
    """Exact interventional attributions for many inputs at once."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    B = np.atleast_2d(np.asarray(background, dtype=float))
    if B.shape[0] == 0:
        raise ContractViolation("background set must be non-empty")
    if X.shape[1] != model.n_features or B.shape[1] != model.n_features:
        raise ContractViolation(
            f"feature count mismatch: model has {model.n_features}, "
            f"got X {X.shape[1]} / background {B.shape[1]}"
        )
    all_paths = [_leaf_paths(tree) for tree in model.trees]
    max_u = max(
        (len(feats) for paths in all_paths for _, feats, _, _ in paths), default=1
    )
    weights = _shapley_weight_table(max(max_u, 1))
    phi = np.zeros((X.shape[0], model.n_features))
    for paths in all_paths:
        _accumulate_tree(phi, paths, X, B, weights)
    phi /= B.shape[0] * len(model.trees)
    base = float(model.predict(B).mean())
    preds = model.predict(X)
    return [
        ShapMetaRepresentation(
            key=None if keys is None else keys[i],
            base_value=base,
            phi=phi[i],
            prediction=float(preds[i]),
        )
        for i in range(X.shape[0])
    ]


def tree_shap(model: RandomForestModel, x: np.ndarray, background: np.ndarray,
              key: Key | None = None) -> ShapMetaRepresentation:
    rep = tree_shap_batch(model, np.asarray(x, dtype=float)[None, :], background)[0]
    return ShapMetaRepresentation(key=key, base_value=rep.base_value, phi=rep.phi,
                                  prediction=rep.prediction)


# ---------------------------------------------------------------------------
# model-agnostic permutation sampling

def sampling_shap(
    model,
    x: np.ndarray,
    background: np.ndarray,
    n_permutations: int = 256,
    seed: int = 0,
    key: Key | None = None,
) -> ShapMetaRepresentation:
    """Permutation-sampling estimate with antithetic pairs.

    Each sampled permutation is paired with its reverse and one cycled
    background row; n_permutations is rounded up to an even total.
    """
    if n_permutations < 1:
        raise ConfigurationError("n_permutations must be >= 1")
    x = np.asarray(x, dtype=float)
    B = np.atleast_2d(np.asarray(background, dtype=float))
    if B.shape[1] != x.shape[0]:
        raise ContractViolation("background width does not match x")
    m = x.shape[0]
    rng = np.random.default_rng(seed)
    n_pairs = (n_permutations + 1) // 2
    total = 2 * n_pairs
    contribs = np.empty((total, m))
    base_samples = np.empty(total)
    row = 0
    for pair in range(n_pairs):
        b = B[pair % B.shape[0]]
        perm = rng.permutation(m)
        for order in (perm, perm[::-1]):
            states = np.repeat(b[None, :], m + 1, axis=0)
            for t, f in enumerate(order):
                states[t + 1:, f] = x[f]
            values = model.predict(states)
            contribs[row, order] = values[1:] - values[:-1]
            base_samples[row] = values[0]
            row += 1
    phi = contribs.mean(axis=0)
    stderr = contribs.std(axis=0, ddof=1) / math.sqrt(total) if total > 1 else np.zeros(m)
    return ShapMetaRepresentation(
        key=key,
        base_value=float(base_samples.mean()),
        phi=phi,
        prediction=float(model.predict(x[None, :])[0]),
        stderr=stderr,
    )


# ---------------------------------------------------------------------------
# global importance and portfolio selection

def global_importance(
    reps: Sequence[ShapMetaRepresentation], feature_names: Sequence[str]
) -> list[tuple[str, float]]:
    """Mean |phi| per feature, descending; ties broken by name."""
    if not reps:
        raise ContractViolation("need at least one meta-representation")
    mat = np.stack([rep.phi for rep in reps])
    if mat.shape[1] != len(feature_names):
        raise ContractViolation("feature name count does not match phi length")
    means = np.mean(np.abs(mat), axis=0)
    pairs = list(zip(feature_names, means.tolist()))
    pairs.sort(key=lambda kv: (-kv[1], kv[0]))
    return pairs


def select_portfolio(
    train_X: np.ndarray,
    train_y: np.ndarray,
    k: int,
    feature_names: Sequence[str],
    model_kind: str = "random_forest",
    seed: int = 0,
    model_params: dict | None = None,
    n_permutations: int = 64,
) -> FeaturePortfolio:
    """Train on all features, rank by train-set importance, keep the top k.

    Uses only the training split (the train set doubles as background),
    so no test information leaks into the selection.
    """
    if k <= 0:
        raise ConfigurationError("portfolio size must be positive")
    if k > len(feature_names):
        raise ConfigurationError(
            f"portfolio size {k} exceeds schema length {len(feature_names)}"
        )
    train_X = np.asarray(train_X, dtype=float)
    model = fit_model(model_kind, train_X, train_y, model_params, seed=seed)
    if model_kind == "random_forest":
        reps = tree_shap_batch(model, train_X, train_X)
    else:
        reps = [
            sampling_shap(model, train_X[i], train_X,
                          n_permutations=n_permutations, seed=seed + i)
            for i in range(train_X.shape[0])
        ]
    ranked = global_importance(reps, feature_names)
    top = ranked[:k]
    return FeaturePortfolio(
        size=k,
        feature_names=tuple(name for name, _ in top),
        source_model_kind=model_kind,
        importances=tuple(imp for _, imp in top),
    )
