"""Exploratory landscape analysis features.

A fixed, documented catalog of named features computed from one Latin
hypercube sample of a problem instance. Groups: dispersion, information
content, nearest-better clustering, regression meta-models, level-set
separability (lda/qda) and principal component structure.

The schema (names and order) is a function of nothing but this module;
every instance of a run produces the same names in the same order. All
outputs are finite: non-finite intermediate results are replaced by 0 and
counted per vector.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigurationError
from .suite import LOWER_BOUND, UPPER_BOUND, ProblemInstance

logger = logging.getLogger(__name__)

DISP_QUANTILES = (0.02, 0.05, 0.10, 0.25)
LEVEL_QUANTILES = (0.10, 0.25, 0.50)
LEVEL_CV_FOLDS = 5
IC_SETTLING_THRESHOLD = 0.05
IC_GRID_SIZE = 30
_EPS = 1e-12


def _q_tag(q: float) -> str:
    return f"{int(round(q * 100)):02d}"


def _build_schema() -> tuple[list[str], dict[str, str]]:
    names: list[str] = []
    groups: dict[str, str] = {}

    def add(group: str, *feat_names: str):
        for fname in feat_names:
            names.append(fname)
            groups[fname] = group

    add("disp", *[f"disp.ratio_mean_{_q_tag(q)}" for q in DISP_QUANTILES])
    add("disp", *[f"disp.diff_mean_{_q_tag(q)}" for q in DISP_QUANTILES])
    add("ic", "ic.h_max", "ic.eps_max", "ic.eps_s", "ic.eps_ratio", "ic.m0")
    add("nbc", "nbc.nn_nb.mean_ratio", "nbc.nn_nb.sd_ratio",
        "nbc.dist_ratio.coeff_var", "nbc.nb_fitness.cor")
    add("ela_meta",
        "ela_meta.lin_simple.adj_r2", "ela_meta.lin_simple.intercept",
        "ela_meta.lin_simple.coef.min", "ela_meta.lin_simple.coef.max",
        "ela_meta.lin_simple.coef.max_by_min",
        "ela_meta.lin_w_interact.adj_r2",
        "ela_meta.quad_simple.adj_r2", "ela_meta.quad_simple.cond",
        "ela_meta.quad_w_interact.adj_r2")
    for q in LEVEL_QUANTILES:
        add("ela_level",
            f"ela_level.mmce_lda_{_q_tag(q)}",
            f"ela_level.mmce_qda_{_q_tag(q)}",
            f"ela_level.lda_qda_{_q_tag(q)}")
    add("pca",
        "pca.expl_var.cov_x", "pca.expl_var.cor_x",
        "pca.expl_var.cov_init", "pca.expl_var.cor_init",
        "pca.expl_var_PC1.cov_x", "pca.expl_var_PC1.cor_x",
        "pca.expl_var_PC1.cov_init", "pca.expl_var_PC1.cor_init")
    return names, groups


FEATURE_SCHEMA, FEATURE_GROUPS = _build_schema()


@dataclass(frozen=True, eq=False)
class SampleDesign:
    """Evaluated sample: rows of X within bounds, y[i] = f(X[i])."""

    X: np.ndarray
    y: np.ndarray
    seed: int


@dataclass(frozen=True, eq=False)
class ElaFeatureVector:
    key: tuple[int, int, int]
    values: dict[str, float]
    sanitized_count: int = 0


def sample_design(instance: ProblemInstance, n: int, seed: int) -> SampleDesign:
    """Latin hypercube sample of the instance domain, evaluated."""
    dim = instance.dimension
    if n < 10 * dim:
        raise ConfigurationError(f"sample size {n} below 10*D = {10 * dim}")
    rng = np.random.default_rng(seed)
    span = UPPER_BOUND - LOWER_BOUND
    X = np.empty((n, dim))
    for j in range(dim):
        strata = rng.permutation(n)
        X[:, j] = LOWER_BOUND + (strata + rng.random(n)) * span / n
    y = instance.evaluate_batch(X)
    return SampleDesign(X=X, y=y, seed=seed)


def _safe_ratio(a: float, b: float, eps: float = _EPS) -> float:
    return max(float(a), eps) / max(float(b), eps)


# ---------------------------------------------------------------------------
# dispersion

def disp_features(design: SampleDesign, quantiles: Sequence[float] = DISP_QUANTILES) -> dict[str, float]:
    X, y = design.X, design.y
    n = len(y)
    dmat = squareform(pdist(X))
    mean_all = float(dmat.sum() / (n * (n - 1)))
    order = np.argsort(y, kind="stable")  # ties: lowest index wins
    out: dict[str, float] = {}
    for q in quantiles:
        m = max(2, math.ceil(q * n))
        idx = order[:m]
        sub = dmat[np.ix_(idx, idx)]
        mean_best = float(sub.sum() / (m * (m - 1)))
        out[f"disp.ratio_mean_{_q_tag(q)}"] = mean_best / max(mean_all, _EPS)
        out[f"disp.diff_mean_{_q_tag(q)}"] = mean_best - mean_all
    return out


# ---------------------------------------------------------------------------
# information content

def _nearest_neighbor_tour(X: np.ndarray) -> np.ndarray:
    """Greedy tour starting at index 0; distance ties go to the lowest index."""
    n = X.shape[0]
    dmat = squareform(pdist(X))
    np.fill_diagonal(dmat, np.inf)
    order = np.empty(n, dtype=int)
    order[0] = 0
    visited = np.zeros(n, dtype=bool)
    visited[0] = True
    cur = 0
    for step in range(1, n):
        row = np.where(visited, np.inf, dmat[cur])
        cur = int(np.argmin(row))
        order[step] = cur
        visited[cur] = True
    return order


def _symbol_sequence(diffs: np.ndarray, eps: float) -> np.ndarray:
    return np.where(diffs > eps, 1, np.where(diffs < -eps, -1, 0))


def _pair_entropy(symbols: np.ndarray) -> float:
    """Base-2 entropy of consecutive unequal symbol pairs (6 admissible pairs)."""
    a, b = symbols[:-1], symbols[1:]
    total = len(a)
    if total == 0:
        return 0.0
    h = 0.0
    for sa in (-1, 0, 1):
        for sb in (-1, 0, 1):
            if sa == sb:
                continue
            p = float(np.sum((a == sa) & (b == sb))) / total
            if p > 0:
                h -= p * math.log2(p)
    return h


def _partial_information(diffs: np.ndarray) -> float:
    symbols = _symbol_sequence(diffs, 0.0)
    nonzero = symbols[symbols != 0]
    if len(nonzero) == 0:
        return 0.0
    changes = 1 + int(np.sum(nonzero[1:] != nonzero[:-1]))
    return changes / len(diffs)


def ic_features(design: SampleDesign) -> dict[str, float]:
    n = len(design.y)
    if n < 3:
        raise ConfigurationError("information content needs at least 3 points")
    order = _nearest_neighbor_tour(design.X)
    diffs = np.diff(design.y[order])
    dmax = float(np.max(np.abs(diffs))) if len(diffs) else 0.0
    zero = {"ic.h_max": 0.0, "ic.eps_max": 0.0, "ic.eps_s": 0.0,
            "ic.eps_ratio": 0.0, "ic.m0": 0.0}
    if dmax == 0.0:
        return zero
    lo = min(1e-5, dmax)
    if lo == dmax:
        grid = np.array([0.0, dmax])
    else:
        grid = np.concatenate(([0.0], np.logspace(math.log10(lo), math.log10(dmax), IC_GRID_SIZE)))
    entropies = np.array([_pair_entropy(_symbol_sequence(diffs, e)) for e in grid])
    h_max = float(np.max(entropies))
    eps_max = float(grid[int(np.argmax(entropies))])  # smallest maximizer
    below = np.nonzero(entropies < IC_SETTLING_THRESHOLD)[0]
    eps_s = float(grid[below[0]]) if len(below) else float(grid[-1])
    eps_ratio = math.log10(_safe_ratio(eps_max, eps_s))
    return {
        "ic.h_max": h_max,
        "ic.eps_max": eps_max,
        "ic.eps_s": eps_s,
        "ic.eps_ratio": eps_ratio,
        "ic.m0": _partial_information(diffs),
    }


# ---------------------------------------------------------------------------
# nearest-better clustering

def nbc_features(design: SampleDesign) -> dict[str, float]:
    X, y = design.X, design.y
    n = len(y)
    if n < 3:
        raise ConfigurationError("nearest-better clustering needs at least 3 points")
    dmat = squareform(pdist(X))
    np.fill_diagonal(dmat, np.inf)
    nn_dist = dmat.min(axis=1)
    better = y[None, :] < y[:, None]  # strictly lower objective
    masked = np.where(better, dmat, np.inf)
    nb_dist = masked.min(axis=1)
    has_better = np.isfinite(nb_dist)
    if has_better.any():
        # points without a better neighbour take the largest observed
        # nearest-better distance
        nb_dist[~has_better] = nb_dist[has_better].max()
    else:
        nb_dist = nn_dist.copy()
    ratios = np.maximum(nn_dist, _EPS) / np.maximum(nb_dist, _EPS)
    cv = float(np.std(ratios, ddof=1)) / max(float(np.mean(ratios)), _EPS)
    if np.std(y) > 0 and np.std(nb_dist) > 0:
        cor = float(np.corrcoef(nb_dist, y)[0, 1])
    else:
        cor = 0.0
    return {
        "nbc.nn_nb.mean_ratio": _safe_ratio(np.mean(nn_dist), np.mean(nb_dist)),
        "nbc.nn_nb.sd_ratio": _safe_ratio(np.std(nn_dist, ddof=1), np.std(nb_dist, ddof=1)),
        "nbc.dist_ratio.coeff_var": cv,
        "nbc.nb_fitness.cor": cor,
    }


# ---------------------------------------------------------------------------
# regression meta-models

def _interactions(X: np.ndarray) -> np.ndarray:
    dim = X.shape[1]
    cols = [X[:, i] * X[:, j] for i in range(dim) for j in range(i + 1, dim)]
    if not cols:
        return np.empty((X.shape[0], 0))
    return np.stack(cols, axis=1)


def n_meta_model_coefficients(dim: int) -> int:
    """Coefficient count of the largest meta-model (quad with interactions)."""
    return 1 + 2 * dim + dim * (dim - 1) // 2


def _fit_least_squares(Z: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    beta, _, rank, _ = np.linalg.lstsq(Z, y, rcond=None)
    if rank < Z.shape[1]:
        logger.warning("rank-deficient meta-model design; ridge fallback (1e-10)")
        gram = Z.T @ Z + 1e-10 * np.eye(Z.shape[1])
        beta = np.linalg.solve(gram, Z.T @ y)
    sse = float(np.sum((y - Z @ beta) ** 2))
    return beta, sse


def _adjusted_r2(sse: float, sst: float, n: int, n_predictors: int) -> float:
    if sst <= 0:
        return 0.0  # constant target convention
    r2 = 1.0 - sse / sst
    return 1.0 - (1.0 - r2) * (n - 1) / (n - n_predictors - 1)


def meta_model_features(design: SampleDesign) -> dict[str, float]:
    X, y = design.X, design.y
    n, dim = X.shape
    if n <= n_meta_model_coefficients(dim):
        raise ConfigurationError(
            f"need more than {n_meta_model_coefficients(dim)} points for meta-models"
        )
    ones = np.ones((n, 1))
    inter = _interactions(X)
    sst = float(np.sum((y - y.mean()) ** 2))

    z_lin = np.hstack([ones, X])
    beta_lin, sse_lin = _fit_least_squares(z_lin, y)
    z_lin_i = np.hstack([ones, X, inter])
    _, sse_lin_i = _fit_least_squares(z_lin_i, y)
    z_quad = np.hstack([ones, X, X**2])
    beta_quad, sse_quad = _fit_least_squares(z_quad, y)
    z_quad_i = np.hstack([ones, X, X**2, inter])
    _, sse_quad_i = _fit_least_squares(z_quad_i, y)

    lin_coefs = np.abs(beta_lin[1:])
    quad_coefs = np.abs(beta_quad[1 + dim:])
    return {
        "ela_meta.lin_simple.adj_r2": _adjusted_r2(sse_lin, sst, n, dim),
        "ela_meta.lin_simple.intercept": float(beta_lin[0]),
        "ela_meta.lin_simple.coef.min": float(lin_coefs.min()),
        "ela_meta.lin_simple.coef.max": float(lin_coefs.max()),
        "ela_meta.lin_simple.coef.max_by_min": _safe_ratio(lin_coefs.max(), lin_coefs.min()),
        "ela_meta.lin_w_interact.adj_r2": _adjusted_r2(
            sse_lin_i, sst, n, z_lin_i.shape[1] - 1),
        "ela_meta.quad_simple.adj_r2": _adjusted_r2(sse_quad, sst, n, 2 * dim),
        "ela_meta.quad_simple.cond": _safe_ratio(quad_coefs.max(), quad_coefs.min()),
        "ela_meta.quad_w_interact.adj_r2": _adjusted_r2(
            sse_quad_i, sst, n, z_quad_i.shape[1] - 1),
    }


# ---------------------------------------------------------------------------
# level sets (lda / qda misclassification under cross-validation)

def _class_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    centered = X - mean
    denom = max(len(X) - 1, 1)
    cov = centered.T @ centered / denom
    return mean, cov


def _discriminant_predict(X, means, covs, priors, pooled: bool):
    dim = X.shape[1]
    reg = 1e-6 * np.eye(dim)
    scores = np.empty((X.shape[0], 2))
    if pooled:
        cov = (covs[0] + covs[1]) / 2.0 + reg
        inv = np.linalg.inv(cov)
        for c in (0, 1):
            diff = X - means[c]
            scores[:, c] = -0.5 * np.sum((diff @ inv) * diff, axis=1) + math.log(priors[c])
    else:
        for c in (0, 1):
            cov = covs[c] + reg
            inv = np.linalg.inv(cov)
            sign, logdet = np.linalg.slogdet(cov)
            diff = X - means[c]
            scores[:, c] = (
                -0.5 * logdet
                - 0.5 * np.sum((diff @ inv) * diff, axis=1)
                + math.log(priors[c])
            )
    return (scores[:, 1] > scores[:, 0]).astype(int)


def _cv_mmce(X: np.ndarray, labels: np.ndarray, pooled: bool) -> float:
    n = len(labels)
    folds = np.empty(n, dtype=int)
    for cls in (0, 1):
        idx = np.nonzero(labels == cls)[0]
        folds[idx] = np.arange(len(idx)) % LEVEL_CV_FOLDS
    errors = 0
    for f in range(LEVEL_CV_FOLDS):
        test = folds == f
        train = ~test
        if not test.any():
            continue
        Xtr, ltr = X[train], labels[train]
        means, covs, priors = [], [], []
        for c in (0, 1):
            member = ltr == c
            mean, cov = _class_stats(Xtr[member])
            means.append(mean)
            covs.append(cov)
            priors.append(member.mean())
        pred = _discriminant_predict(X[test], means, covs, priors, pooled)
        errors += int(np.sum(pred != labels[test]))
    return errors / n


def level_features(design: SampleDesign) -> dict[str, float]:
    X, y = design.X, design.y
    n = len(y)
    if n < 50:
        raise ConfigurationError("level-set features need at least 50 points")
    order = np.argsort(y, kind="stable")
    out: dict[str, float] = {}
    for q in LEVEL_QUANTILES:
        m = math.ceil(q * n)
        labels = np.zeros(n, dtype=int)
        labels[order[:m]] = 1  # lowest q share of objective values
        mmce_lda = _cv_mmce(X, labels, pooled=True)
        mmce_qda = _cv_mmce(X, labels, pooled=False)
        tag = _q_tag(q)
        out[f"ela_level.mmce_lda_{tag}"] = mmce_lda
        out[f"ela_level.mmce_qda_{tag}"] = mmce_qda
        out[f"ela_level.lda_qda_{tag}"] = _safe_ratio(mmce_lda, mmce_qda)
    return out


# ---------------------------------------------------------------------------
# principal component structure

def _pca_pair(M: np.ndarray, correlation: bool) -> tuple[float, float]:
    """(fraction of PCs for 90% variance, PC1 explained proportion)."""
    centered = M - M.mean(axis=0)
    if correlation:
        std = centered.std(axis=0)
        scaled = np.zeros_like(centered)
        nz = std > 0
        scaled[:, nz] = centered[:, nz] / std[nz]
        centered = scaled
    svals = np.linalg.svd(centered, compute_uv=False)
    ev = svals**2
    total = float(ev.sum())
    n_vars = M.shape[1]
    if total <= 0:
        return 1.0, 0.0
    props = ev[:n_vars] / total if len(ev) >= n_vars else np.concatenate(
        [ev / total, np.zeros(n_vars - len(ev))])
    k90 = int(np.searchsorted(np.cumsum(props), 0.9 - 1e-12) + 1)
    k90 = min(k90, n_vars)
    return k90 / n_vars, float(props[0])


def pca_features(design: SampleDesign) -> dict[str, float]:
    X, y = design.X, design.y
    n, dim = X.shape
    if n <= dim:
        raise ConfigurationError("pca features need more points than dimensions")
    init = np.hstack([X, y[:, None]])
    frac_cov_x, pc1_cov_x = _pca_pair(X, correlation=False)
    frac_cor_x, pc1_cor_x = _pca_pair(X, correlation=True)
    frac_cov_i, pc1_cov_i = _pca_pair(init, correlation=False)
    frac_cor_i, pc1_cor_i = _pca_pair(init, correlation=True)
    return {
        "pca.expl_var.cov_x": frac_cov_x,
        "pca.expl_var.cor_x": frac_cor_x,
        "pca.expl_var.cov_init": frac_cov_i,
        "pca.expl_var.cor_init": frac_cor_i,
        "pca.expl_var_PC1.cov_x": pc1_cov_x,
        "pca.expl_var_PC1.cor_x": pc1_cor_x,
        "pca.expl_var_PC1.cov_init": pc1_cov_i,
        "pca.expl_var_PC1.cor_init": pc1_cor_i,
    }


# ---------------------------------------------------------------------------
# full vector

def minimum_sample_size(dim: int) -> int:
    return max(10 * dim, 50, n_meta_model_coefficients(dim) + 1, dim + 1)


def extract_all(instance: ProblemInstance, n: int, seed: int) -> ElaFeatureVector:
    """All feature groups under the fixed schema; deterministic given seed."""
    need = minimum_sample_size(instance.dimension)
    if n < need:
        raise ConfigurationError(f"sample size {n} below required {need} for D={instance.dimension}")
    design = sample_design(instance, n, seed)
    raw: dict[str, float] = {}
    raw.update(disp_features(design))
    raw.update(ic_features(design))
    raw.update(nbc_features(design))
    raw.update(meta_model_features(design))
    raw.update(level_features(design))
    raw.update(pca_features(design))
    values: dict[str, float] = {}
    sanitized = 0
    for name in FEATURE_SCHEMA:
        v = float(raw[name])
        if not math.isfinite(v):
            logger.warning("non-finite feature %s on %s replaced by 0", name, instance.key)
            v = 0.0
            sanitized += 1
        values[name] = v
    return ElaFeatureVector(key=instance.key, values=values, sanitized_count=sanitized)


def write_features_csv(vectors: Sequence[ElaFeatureVector], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["problem_id", "instance_id", "dimension"] + FEATURE_SCHEMA)
        for vec in vectors:
            writer.writerow(
                list(vec.key) + [repr(vec.values[name]) for name in FEATURE_SCHEMA]
            )


def read_features_csv(path) -> list[ElaFeatureVector]:
    vectors = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            key = (int(row["problem_id"]), int(row["instance_id"]), int(row["dimension"]))
            values = {name: float(row[name]) for name in FEATURE_SCHEMA}
            vectors.append(ElaFeatureVector(key=key, values=values))
    return vectors


def write_schema_json(path) -> None:
    payload = {
        "n_features": len(FEATURE_SCHEMA),
        "features": [
            {"name": name, "group": FEATURE_GROUPS[name]} for name in FEATURE_SCHEMA
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
