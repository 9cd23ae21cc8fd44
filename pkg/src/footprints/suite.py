"""Scalable 24-function benchmark suite with per-instance transformations.

Each problem id maps to one of the classic noiseless single-objective test
functions (sphere ... bi-Rastrigin). An instance shifts the optimum to a
seed-derived point in [-4, 4]^D and translates the objective by a
seed-derived offset, so ``evaluate(instance, x_opt) == f_offset`` exactly
and ``evaluate(instance, x) >= f_offset`` everywhere.

Functions are written in optimum-at-origin coordinates ``y = x - shift``.
Where the classic definition pins its optimum elsewhere (linear slope,
Rosenbrock family, Schwefel, Gallagher peaks, bi-Rastrigin) the core is
composed so that the optimum lands on the shift, and the residual core
value at the optimum (FP noise, e.g. ~1e-13 for Schwefel) is subtracted at
construction time.

Evaluation is allowed outside [-5, 5]^D and adds no out-of-bounds penalty;
the only penalty term kept is Schwefel's, which is part of that function
being bounded below.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .seeding import SUITE_SALT, derive_seed

LOWER_BOUND = -5.0
UPPER_BOUND = 5.0
SHIFT_RANGE = 4.0
N_PROBLEMS = 24

PROBLEM_NAMES = {
    1: "sphere",
    2: "ellipsoid_separable",
    3: "rastrigin_separable",
    4: "bueche_rastrigin",
    5: "linear_slope",
    6: "attractive_sector",
    7: "step_ellipsoid",
    8: "rosenbrock",
    9: "rosenbrock_rotated",
    10: "ellipsoid_rotated",
    11: "discus",
    12: "bent_cigar",
    13: "sharp_ridge",
    14: "different_powers",
    15: "rastrigin_rotated",
    16: "weierstrass",
    17: "schaffers_f7",
    18: "schaffers_f7_ill",
    19: "griewank_rosenbrock",
    20: "schwefel",
    21: "gallagher_101",
    22: "gallagher_21",
    23: "katsuura",
    24: "lunacek_bi_rastrigin",
}


@dataclass(frozen=True, eq=False)
class SuiteConfig:
    """Selection of problems, instances and the shared dimension."""

    problem_ids: tuple[int, ...]
    instance_ids: tuple[int, ...]
    dimension: int

    def __post_init__(self):
        object.__setattr__(self, "problem_ids", tuple(sorted(set(self.problem_ids))))
        object.__setattr__(self, "instance_ids", tuple(sorted(set(self.instance_ids))))
        if not self.problem_ids or not self.instance_ids:
            raise ConfigurationError("problem_ids and instance_ids must be non-empty")
        bad = [p for p in self.problem_ids if not 1 <= p <= N_PROBLEMS]
        if bad:
            raise ConfigurationError(f"unknown problem ids {bad}; valid range is 1..{N_PROBLEMS}")
        if any(i < 1 for i in self.instance_ids):
            raise ConfigurationError("instance ids must be >= 1")
        if self.dimension < 2:
            raise ConfigurationError("dimension must be >= 2")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """One transformed benchmark function; immutable and safe to share."""

    problem_id: int
    instance_id: int
    dimension: int
    shift: np.ndarray
    f_offset: float
    seed: int
    aux: dict = field(repr=False)
    core_at_opt: float = field(repr=False)

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.problem_id, self.instance_id, self.dimension)

    @property
    def name(self) -> str:
        return PROBLEM_NAMES[self.problem_id]

    def evaluate(self, x: Sequence[float]) -> float:
        return float(self.evaluate_batch(np.asarray(x, dtype=float)[None, :])[0])

    def evaluate_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dimension:
            raise ContractViolation(
                f"expected points of dimension {self.dimension}, got shape {X.shape}"
            )
        Y = X - self.shift[None, :]
        core = _CORES[self.problem_id](Y, self.aux)
        return core - self.core_at_opt + self.f_offset


def make_instance(problem_id: int, instance_id: int, dimension: int) -> ProblemInstance:
    """Construct an instance; identical arguments always give identical functions."""
    if not 1 <= problem_id <= N_PROBLEMS:
        raise ConfigurationError(f"unknown problem id {problem_id}; valid range is 1..{N_PROBLEMS}")
    if instance_id < 1:
        raise ConfigurationError("instance id must be >= 1")
    if dimension < 2:
        raise ConfigurationError("dimension must be >= 2")
    seed = derive_seed(SUITE_SALT, problem_id, instance_id, dimension)
    rng = np.random.default_rng(seed)
    # Fixed draw order: shift, offset, then per-function setup.
    shift = rng.uniform(-SHIFT_RANGE, SHIFT_RANGE, dimension)
    f_offset = round(float(rng.uniform(-100.0, 100.0)), 2)
    aux = _SETUPS[problem_id](dimension, rng)
    shift.setflags(write=False)
    core_at_opt = float(_CORES[problem_id](np.zeros((1, dimension)), aux)[0])
    return ProblemInstance(
        problem_id=problem_id,
        instance_id=instance_id,
        dimension=dimension,
        shift=shift,
        f_offset=f_offset,
        seed=seed,
        aux=aux,
        core_at_opt=core_at_opt,
    )


def make_suite(config: SuiteConfig) -> list[ProblemInstance]:
    """All (problem, instance) pairs in problem-major, instance-minor order."""
    return [
        make_instance(p, i, config.dimension)
        for p in config.problem_ids
        for i in config.instance_ids
    ]


def precision(instance: ProblemInstance, f_value: float) -> float:
    """Distance of an objective value to the instance optimum, clamped at 0."""
    return max(float(f_value) - instance.f_offset, 0.0)


def write_suite_csv(instances: Iterable[ProblemInstance], path) -> None:
    instances = list(instances)
    dim = instances[0].dimension if instances else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["problem_id", "instance_id", "dimension", "f_offset"]
            + [f"shift_{j}" for j in range(dim)]
        )
        for inst in instances:
            writer.writerow(
                [inst.problem_id, inst.instance_id, inst.dimension, repr(inst.f_offset)]
                + [repr(float(v)) for v in inst.shift]
            )


# ---------------------------------------------------------------------------
# shared coordinate transformations (batch form, rows are points)

def _orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Orthogonal matrix from QR of a seeded Gaussian, sign-normalized."""
    g = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))[None, :]


def _t_osz(Z: np.ndarray) -> np.ndarray:
    absZ = np.abs(Z)
    xhat = np.zeros_like(Z)
    nz = absZ > 0
    xhat[nz] = np.log(absZ[nz])
    c1 = np.where(Z > 0, 10.0, 5.5)
    c2 = np.where(Z > 0, 7.9, 3.1)
    out = np.sign(Z) * np.exp(xhat + 0.049 * (np.sin(c1 * xhat) + np.sin(c2 * xhat)))
    out[~nz] = 0.0
    return out


def _t_asy(Z: np.ndarray, beta: float) -> np.ndarray:
    dim = Z.shape[1]
    idx = np.arange(dim) / (dim - 1)
    pos = Z > 0
    exponent = 1.0 + beta * idx[None, :] * np.sqrt(np.where(pos, Z, 0.0))
    return np.where(pos, np.where(pos, Z, 1.0) ** exponent, Z)


def _lam(alpha: float, dim: int) -> np.ndarray:
    """Diagonal of the conditioning matrix, as a vector."""
    return alpha ** (0.5 * np.arange(dim) / (dim - 1))


def _fpen(Z: np.ndarray) -> np.ndarray:
    return np.sum(np.maximum(0.0, np.abs(Z) - 5.0) ** 2, axis=1)


def _rot(Y: np.ndarray, R: np.ndarray) -> np.ndarray:
    return Y @ R.T


# ---------------------------------------------------------------------------
# per-problem setup (seed-derived constants) and cores

def _setup_none(dim, rng):
    return {}


def _setup_signs(dim, rng):
    return {"signs": np.where(rng.random(dim) < 0.5, -1.0, 1.0)}


def _setup_r(dim, rng):
    return {"R": _orthogonal(rng, dim)}


def _setup_rq(dim, rng):
    return {"R": _orthogonal(rng, dim), "Q": _orthogonal(rng, dim)}


def _setup_rq_signs(dim, rng):
    aux = _setup_rq(dim, rng)
    aux["signs"] = np.where(rng.random(dim) < 0.5, -1.0, 1.0)
    return aux


def _setup_gallagher(n_peaks: int, alpha_first: float, peak_range: float):
    def setup(dim, rng):
        R = _orthogonal(rng, dim)
        alpha_set = 1000.0 ** (2.0 * np.arange(n_peaks - 1) / (n_peaks - 2))
        alphas = np.concatenate(([alpha_first], rng.permutation(alpha_set)))
        B = np.empty((n_peaks, dim, dim))
        for p in range(n_peaks):
            diag = _lam(alphas[p], dim) / alphas[p] ** 0.25
            diag = rng.permutation(diag)
            B[p] = R.T @ (diag[:, None] * R)
        peaks = rng.uniform(-peak_range, peak_range, (n_peaks, dim))
        peaks[0] = 0.0  # optimum peak sits on the shift
        weights = np.concatenate(
            ([10.0], 1.1 + 8.0 * np.arange(n_peaks - 1) / (n_peaks - 2))
        )
        return {"B": B, "peaks": peaks, "weights": weights}

    return setup


def _f01_sphere(Y, aux):
    return np.sum(Y**2, axis=1)


def _f02_ellipsoid(Y, aux):
    dim = Y.shape[1]
    z = _t_osz(Y)
    scale = 10.0 ** (6.0 * np.arange(dim) / (dim - 1))
    return np.sum(scale[None, :] * z**2, axis=1)


def _rastrigin_sum(Z):
    dim = Z.shape[1]
    return 10.0 * (dim - np.sum(np.cos(2.0 * np.pi * Z), axis=1)) + np.sum(Z**2, axis=1)


def _f03_rastrigin(Y, aux):
    dim = Y.shape[1]
    z = _t_asy(_t_osz(Y), 0.2) * _lam(10.0, dim)[None, :]
    return _rastrigin_sum(z)


def _f04_bueche(Y, aux):
    dim = Y.shape[1]
    z = _t_osz(Y)
    s = 10.0 ** (0.5 * np.arange(dim) / (dim - 1))
    s = np.broadcast_to(s, z.shape).copy()
    odd = np.arange(dim) % 2 == 0  # 1-based odd coordinates
    s[:, odd] = np.where(z[:, odd] > 0, 10.0 * s[:, odd], s[:, odd])
    return _rastrigin_sum(s * z)


def _f05_linear_slope(Y, aux):
    dim = Y.shape[1]
    corner = 5.0 * aux["signs"]
    s = aux["signs"] * 10.0 ** (np.arange(dim) / (dim - 1))
    x = Y + corner[None, :]
    z = np.where(x * corner[None, :] < 25.0, x, corner[None, :])
    return np.sum(5.0 * np.abs(s)[None, :] - s[None, :] * z, axis=1)


def _f06_attractive_sector(Y, aux):
    dim = Y.shape[1]
    z = _rot(_rot(Y, aux["R"]) * _lam(10.0, dim)[None, :], aux["Q"])
    s = np.where(z * aux["signs"][None, :] > 0, 100.0, 1.0)
    total = np.sum((s * z) ** 2, axis=1)
    return _t_osz(total[:, None])[:, 0] ** 0.9


def _f07_step_ellipsoid(Y, aux):
    dim = Y.shape[1]
    zhat = _rot(Y, aux["R"]) * _lam(10.0, dim)[None, :]
    ztilde = np.where(
        np.abs(zhat) > 0.5, np.floor(0.5 + zhat), np.floor(0.5 + 10.0 * zhat) / 10.0
    )
    z = _rot(ztilde, aux["Q"])
    scale = 100.0 * 10.0 ** (2.0 * np.arange(dim) / (dim - 1))
    body = np.sum(scale[None, :] * z**2, axis=1)
    return 0.1 * np.maximum(np.abs(zhat[:, 0]) / 1e4, body)


def _rosenbrock_sum(Z):
    a = Z[:, :-1]
    b = Z[:, 1:]
    return np.sum(100.0 * (a**2 - b) ** 2 + (a - 1.0) ** 2, axis=1)


def _f08_rosenbrock(Y, aux):
    dim = Y.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * Y + 1.0
    return _rosenbrock_sum(z)


def _f09_rosenbrock_rot(Y, aux):
    dim = Y.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * _rot(Y, aux["R"]) + 1.0
    return _rosenbrock_sum(z)


def _f10_ellipsoid_rot(Y, aux):
    dim = Y.shape[1]
    z = _t_osz(_rot(Y, aux["R"]))
    scale = 10.0 ** (6.0 * np.arange(dim) / (dim - 1))
    return np.sum(scale[None, :] * z**2, axis=1)


def _f11_discus(Y, aux):
    z = _t_osz(_rot(Y, aux["R"]))
    return 1e6 * z[:, 0] ** 2 + np.sum(z[:, 1:] ** 2, axis=1)


def _f12_bent_cigar(Y, aux):
    z = _rot(_t_asy(_rot(Y, aux["R"]), 0.5), aux["R"])
    return z[:, 0] ** 2 + 1e6 * np.sum(z[:, 1:] ** 2, axis=1)


def _f13_sharp_ridge(Y, aux):
    dim = Y.shape[1]
    z = _rot(_rot(Y, aux["R"]) * _lam(10.0, dim)[None, :], aux["Q"])
    return z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(z[:, 1:] ** 2, axis=1))


def _f14_different_powers(Y, aux):
    dim = Y.shape[1]
    z = _rot(Y, aux["R"])
    expo = 2.0 + 4.0 * np.arange(dim) / (dim - 1)
    return np.sqrt(np.sum(np.abs(z) ** expo[None, :], axis=1))


def _f15_rastrigin_rot(Y, aux):
    dim = Y.shape[1]
    z = _t_asy(_t_osz(_rot(Y, aux["R"])), 0.2)
    z = _rot(_rot(z, aux["Q"]) * _lam(10.0, dim)[None, :], aux["R"])
    return _rastrigin_sum(z)


_WEIERSTRASS_K = np.arange(12)
_WEIERSTRASS_F0 = float(np.sum(0.5**_WEIERSTRASS_K * np.cos(np.pi * 3.0**_WEIERSTRASS_K)))


def _f16_weierstrass(Y, aux):
    dim = Y.shape[1]
    z = _rot(_rot(_t_osz(_rot(Y, aux["R"])), aux["Q"]) * _lam(0.01, dim)[None, :], aux["R"])
    half_k = 0.5**_WEIERSTRASS_K
    three_k = 3.0**_WEIERSTRASS_K
    terms = half_k[None, None, :] * np.cos(
        2.0 * np.pi * three_k[None, None, :] * (z[:, :, None] + 0.5)
    )
    inner = np.sum(terms, axis=(1, 2)) / dim
    return 10.0 * (inner - _WEIERSTRASS_F0) ** 3


def _schaffers(Y, aux, condition):
    dim = Y.shape[1]
    z = _rot(_t_asy(_rot(Y, aux["R"]), 0.5), aux["Q"]) * _lam(condition, dim)[None, :]
    s = np.sqrt(z[:, :-1] ** 2 + z[:, 1:] ** 2)
    total = np.sum(np.sqrt(s) + np.sqrt(s) * np.sin(50.0 * s**0.2) ** 2, axis=1)
    return (total / (dim - 1.0)) ** 2


def _f17_schaffers(Y, aux):
    return _schaffers(Y, aux, 10.0)


def _f18_schaffers_ill(Y, aux):
    return _schaffers(Y, aux, 1000.0)


def _f19_griewank_rosenbrock(Y, aux):
    dim = Y.shape[1]
    z = max(1.0, np.sqrt(dim) / 8.0) * _rot(Y, aux["R"]) + 1.0
    s = 100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (z[:, :-1] - 1.0) ** 2
    return 10.0 * np.sum(s / 4000.0 - np.cos(s), axis=1) / (dim - 1.0) + 10.0


_SCHWEFEL_XOPT = 4.2096874633


def _f20_schwefel(Y, aux):
    dim = Y.shape[1]
    signs = aux["signs"]
    copt = 0.5 * _SCHWEFEL_XOPT * signs
    x = Y + copt[None, :]
    xhat = 2.0 * signs[None, :] * x
    zhat = xhat.copy()
    zhat[:, 1:] += 0.25 * (xhat[:, :-1] - _SCHWEFEL_XOPT)
    z = 100.0 * (_lam(10.0, dim)[None, :] * (zhat - _SCHWEFEL_XOPT) + _SCHWEFEL_XOPT)
    body = -np.sum(z * np.sin(np.sqrt(np.abs(z))), axis=1) / (100.0 * dim)
    return body + 4.189828872724339 + 100.0 * _fpen(z / 100.0)


def _gallagher(Y, aux):
    dim = Y.shape[1]
    B, peaks, weights = aux["B"], aux["peaks"], aux["weights"]
    vals = np.empty((Y.shape[0], peaks.shape[0]))
    for p in range(peaks.shape[0]):
        U = Y - peaks[p][None, :]
        vals[:, p] = weights[p] * np.exp(-np.sum((U @ B[p]) * U, axis=1) / (2.0 * dim))
    best = np.max(vals, axis=1)
    return _t_osz((10.0 - best)[:, None])[:, 0] ** 2


_f21_gallagher_101 = _gallagher
_f22_gallagher_21 = _gallagher


_KATSUURA_J = 2.0 ** np.arange(1, 33)


def _f23_katsuura(Y, aux):
    dim = Y.shape[1]
    z = _rot(_rot(Y, aux["R"]) * _lam(100.0, dim)[None, :], aux["Q"])
    zj = z[:, :, None] * _KATSUURA_J[None, None, :]
    s = np.sum(np.abs(zj - np.round(zj)) / _KATSUURA_J[None, None, :], axis=2)
    prod = np.prod(1.0 + np.arange(1, dim + 1)[None, :] * s, axis=1)
    return (10.0 / dim**2) * (prod ** (10.0 / dim**1.2) - 1.0)


def _f24_lunacek(Y, aux):
    dim = Y.shape[1]
    signs = aux["signs"]
    mu0 = 2.5
    d = 1.0
    s = 1.0 - 1.0 / (2.0 * np.sqrt(dim + 20.0) - 8.2)
    mu1 = -np.sqrt((mu0**2 - d) / s)
    x = Y + (0.5 * mu0 * signs)[None, :]
    xhat = 2.0 * signs[None, :] * x
    z = _rot(_rot(xhat - mu0, aux["R"]) * _lam(100.0, dim)[None, :], aux["Q"])
    s1 = np.sum((xhat - mu0) ** 2, axis=1)
    s2 = d * dim + s * np.sum((xhat - mu1) ** 2, axis=1)
    return np.minimum(s1, s2) + 10.0 * (dim - np.sum(np.cos(2.0 * np.pi * z), axis=1))


_SETUPS = {
    1: _setup_none,
    2: _setup_none,
    3: _setup_none,
    4: _setup_none,
    5: _setup_signs,
    6: _setup_rq_signs,
    7: _setup_rq,
    8: _setup_none,
    9: _setup_r,
    10: _setup_r,
    11: _setup_r,
    12: _setup_r,
    13: _setup_rq,
    14: _setup_r,
    15: _setup_rq,
    16: _setup_rq,
    17: _setup_rq,
    18: _setup_rq,
    19: _setup_r,
    20: _setup_signs,
    21: _setup_gallagher(101, 1000.0, 5.0),
    22: _setup_gallagher(21, 1000.0**2, 4.9),
    23: _setup_rq,
    24: _setup_rq_signs,
}

_CORES = {
    1: _f01_sphere,
    2: _f02_ellipsoid,
    3: _f03_rastrigin,
    4: _f04_bueche,
    5: _f05_linear_slope,
    6: _f06_attractive_sector,
    7: _f07_step_ellipsoid,
    8: _f08_rosenbrock,
    9: _f09_rosenbrock_rot,
    10: _f10_ellipsoid_rot,
    11: _f11_discus,
    12: _f12_bent_cigar,
    13: _f13_sharp_ridge,
    14: _f14_different_powers,
    15: _f15_rastrigin_rot,
    16: _f16_weierstrass,
    17: _f17_schaffers,
    18: _f18_schaffers_ill,
    19: _f19_griewank_rosenbrock,
    20: _f20_schwefel,
    21: _f21_gallagher_101,
    22: _f22_gallagher_21,
    23: _f23_katsuura,
    24: _f24_lunacek,
}
