"""Differential evolution under a fixed evaluation budget.

Runs are deterministic given (instance, config, budget, seed) and consume
exactly ``budget`` objective evaluations; the last generation is truncated
when the remaining budget is smaller than the population.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError
from .suite import LOWER_BOUND, UPPER_BOUND

STRATEGIES = ("rand/1/bin", "best/1/bin", "rand/2/bin", "current-to-best/1/bin")

# distinct parent indices needed besides the target itself
_N_PARENTS = {
    "rand/1/bin": 3,
    "best/1/bin": 2,
    "rand/2/bin": 5,
    "current-to-best/1/bin": 2,
}

PRECISION_FLOOR = 1e-8


@dataclass(frozen=True)
class DeConfig:
    config_id: str
    strategy: str
    F: float
    Cr: float
    population_size: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(
                f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}"
            )
        if not 0.0 < self.F <= 2.0:
            raise ConfigurationError("F must be in (0, 2]")
        if not 0.0 <= self.Cr <= 1.0:
            raise ConfigurationError("Cr must be in [0, 1]")
        min_pop = _N_PARENTS[self.strategy] + 1
        if self.population_size < max(4, min_pop):
            raise ConfigurationError(
                f"population_size {self.population_size} too small for "
                f"{self.strategy} (needs >= {max(4, min_pop)})"
            )


def default_population_size(dimension: int) -> int:
    return min(10 * dimension, 100)


def default_portfolio(dimension: int) -> list[DeConfig]:
    """Conventional three-config portfolio; fully overridable via run config."""
    pop = default_population_size(dimension)
    return [
        DeConfig("DE1", "rand/1/bin", 0.5, 0.9, pop),
        DeConfig("DE2", "best/1/bin", 0.8, 0.5, pop),
        DeConfig("DE3", "rand/2/bin", 0.5, 0.3, pop),
    ]


@dataclass(frozen=True)
class PerformanceRecord:
    config_id: str
    problem_id: int
    instance_id: int
    dimension: int
    raw_precisions: tuple[float, ...]
    median_log_precision: float

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.problem_id, self.instance_id, self.dimension)


def median_log_precision(raw_precisions: Sequence[float]) -> float:
    med = float(np.median(np.asarray(raw_precisions, dtype=float)))
    return math.log10(max(med, PRECISION_FLOOR))


def _reflect(X: np.ndarray, lo: float = LOWER_BOUND, hi: float = UPPER_BOUND) -> np.ndarray:
    """Fold arbitrary reals back into [lo, hi] by reflection at the bounds."""
    span = hi - lo
    Y = np.mod(X - lo, 2.0 * span)
    return lo + np.where(Y > span, 2.0 * span - Y, Y)


def _pick_distinct(rng: np.random.Generator, pop_size: int, exclude: int, k: int) -> np.ndarray:
    """k distinct indices from 0..pop_size-1, never equal to `exclude`."""
    idx = rng.choice(pop_size - 1, size=k, replace=False)
    idx[idx >= exclude] += 1
    return idx


def run_de(
    instance,
    config: DeConfig,
    budget: int,
    seed: int,
    on_generation: Callable[[int, np.ndarray, np.ndarray], None] | None = None,
) -> float:
    """Best precision reached after exactly `budget` evaluations.

    `on_generation(gen, population, fvalues)` is invoked after the initial
    sampling (gen 0) and after every selection step; intended for tests and
    progress monitoring.
    """
    pop_size = config.population_size
    if budget < pop_size:
        raise ConfigurationError(f"budget {budget} smaller than population {pop_size}")
    dim = instance.dimension
    rng = np.random.default_rng(seed)

    pop = rng.uniform(LOWER_BOUND, UPPER_BOUND, (pop_size, dim))
    fvals = instance.evaluate_batch(pop)
    evals = pop_size
    best_f = float(np.min(fvals))
    gen = 0
    if on_generation is not None:
        on_generation(gen, pop.copy(), fvals.copy())

    while evals < budget:
        m = min(pop_size, budget - evals)
        best_idx = int(np.argmin(fvals))
        trials = np.empty((m, dim))
        for i in range(m):
            r = _pick_distinct(rng, pop_size, i, _N_PARENTS[config.strategy])
            if config.strategy == "rand/1/bin":
                v = pop[r[0]] + config.F * (pop[r[1]] - pop[r[2]])
            elif config.strategy == "best/1/bin":
                v = pop[best_idx] + config.F * (pop[r[0]] - pop[r[1]])
            elif config.strategy == "rand/2/bin":
                v = (
                    pop[r[0]]
                    + config.F * (pop[r[1]] - pop[r[2]])
                    + config.F * (pop[r[3]] - pop[r[4]])
                )
            else:  # current-to-best/1/bin
                v = (
                    pop[i]
                    + config.F * (pop[best_idx] - pop[i])
                    + config.F * (pop[r[0]] - pop[r[1]])
                )
            cross = rng.random(dim) < config.Cr
            cross[rng.integers(dim)] = True
            trials[i] = np.where(cross, v, pop[i])
        trials = _reflect(trials)
        tvals = instance.evaluate_batch(trials)
        evals += m
        best_f = min(best_f, float(np.min(tvals)))
        accept = tvals <= fvals[:m]
        pop[:m][accept] = trials[accept]
        fvals[:m][accept] = tvals[accept]
        gen += 1
        if on_generation is not None:
            on_generation(gen, pop.copy(), fvals.copy())

    return max(best_f - instance.f_offset, 0.0)


def measure(
    instance,
    config: DeConfig,
    budget: int,
    n_runs: int,
    base_seed: int,
) -> PerformanceRecord:
    """Aggregate repeated runs (seeds base_seed..base_seed+n_runs-1)."""
    if n_runs < 1:
        raise ConfigurationError("n_runs must be >= 1")
    raw = tuple(run_de(instance, config, budget, base_seed + r) for r in range(n_runs))
    return PerformanceRecord(
        config_id=config.config_id,
        problem_id=instance.problem_id,
        instance_id=instance.instance_id,
        dimension=instance.dimension,
        raw_precisions=raw,
        median_log_precision=median_log_precision(raw),
    )


def write_performance_csv(records: Sequence[PerformanceRecord], path) -> None:
    records = list(records)
    n_runs = len(records[0].raw_precisions) if records else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["config_id", "problem_id", "instance_id", "dimension", "n_runs",
             "median_log_precision"]
            + [f"run_{r}" for r in range(n_runs)]
        )
        for rec in records:
            writer.writerow(
                [rec.config_id, rec.problem_id, rec.instance_id, rec.dimension,
                 len(rec.raw_precisions), repr(rec.median_log_precision)]
                + [repr(v) for v in rec.raw_precisions]
            )


def read_performance_csv(path) -> list[PerformanceRecord]:
    records = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            n_runs = int(row["n_runs"])
            raw = tuple(float(row[f"run_{r}"]) for r in range(n_runs))
            records.append(
                PerformanceRecord(
                    config_id=row["config_id"],
                    problem_id=int(row["problem_id"]),
                    instance_id=int(row["instance_id"]),
                    dimension=int(row["dimension"]),
                    raw_precisions=raw,
                    median_log_precision=float(row["median_log_precision"]),
                )
            )
    return records
