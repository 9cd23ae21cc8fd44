import numpy as np
import pytest

from footprints.de import (
    DeConfig,
    PerformanceRecord,
    default_population_size,
    default_portfolio,
    measure,
    median_log_precision,
    run_de,
    write_performance_csv,
    read_performance_csv,
)
from footprints.errors import ConfigurationError
from footprints.suite import make_instance

from _oracles import random_search_precision

RAND1 = DeConfig("DE1", "rand/1/bin", 0.5, 0.9, 20)


class ConstantInstance:
    """Objective stub: f(x) == f_offset everywhere."""

    problem_id = 0
    instance_id = 0
    dimension = 3
    f_offset = 4.25

    def evaluate_batch(self, X):
        return np.full(X.shape[0], self.f_offset)


class CountingInstance:
    """Wraps a real instance, recording every evaluated point and value."""

    def __init__(self, inner):
        self.inner = inner
        self.dimension = inner.dimension
        self.f_offset = inner.f_offset
        self.points = []
        self.values = []

    def evaluate_batch(self, X):
        out = self.inner.evaluate_batch(X)
        self.points.append(np.array(X))
        self.values.extend(out.tolist())
        return out

    @property
    def n_evaluations(self):
        return len(self.values)


def test_constant_function_gives_zero_precision():
    assert run_de(ConstantInstance(), RAND1, budget=100, seed=1) == 0.0


def test_budget_consumed_exactly():
    inner = make_instance(1, 1, 3)
    for budget in (20, 23, 67, 100):
        counting = CountingInstance(inner)
        run_de(counting, RAND1, budget=budget, seed=3)
        assert counting.n_evaluations == budget


def test_budget_below_population_rejected():
    with pytest.raises(ConfigurationError):
        run_de(make_instance(1, 1, 3), RAND1, budget=10, seed=0)


def test_result_is_minimum_of_evaluation_stream():
    inner = make_instance(8, 1, 3)
    counting = CountingInstance(inner)
    result = run_de(counting, RAND1, budget=200, seed=11)
    assert result == pytest.approx(min(counting.values) - inner.f_offset)


def test_all_evaluated_points_respect_bounds():
    inner = make_instance(3, 1, 3)
    counting = CountingInstance(inner)
    run_de(counting, DeConfig("x", "rand/1/bin", 1.9, 1.0, 20), budget=400, seed=2)
    allpts = np.vstack(counting.points)
    assert np.all(allpts >= -5.0) and np.all(allpts <= 5.0)


def test_selection_never_worsens_population():
    inner = make_instance(15, 1, 4)
    history = []
    run_de(inner, RAND1, budget=300, seed=7,
           on_generation=lambda gen, pop, fvals: history.append(fvals))
    for prev, cur in zip(history, history[1:]):
        assert np.all(cur <= prev + 1e-12)


def test_best_so_far_trace_monotone():
    inner = make_instance(10, 1, 4)
    counting = CountingInstance(inner)
    run_de(counting, RAND1, budget=300, seed=9)
    best = np.minimum.accumulate(np.array(counting.values))
    assert np.all(np.diff(best) <= 0.0)


def test_de_beats_random_search_on_sphere():
    # independent oracle: uniform random search with the same budget
    inst = make_instance(1, 1, 2)
    config = DeConfig("DE1", "rand/1/bin", 0.5, 0.9, 20)
    de_results = [run_de(inst, config, budget=1000, seed=s) for s in range(30)]
    rs_results = [random_search_precision(inst, 1000, seed=s) for s in range(30)]
    assert np.median(de_results) < np.median(rs_results)


def test_seed_determinism():
    inst = make_instance(6, 2, 5)
    config = DeConfig("DE2", "best/1/bin", 0.8, 0.5, 30)
    a = measure(inst, config, budget=300, n_runs=4, base_seed=77)
    b = measure(inst, config, budget=300, n_runs=4, base_seed=77)
    assert a.raw_precisions == b.raw_precisions


def test_measure_uses_consecutive_seeds():
    inst = make_instance(2, 1, 3)
    rec = measure(inst, RAND1, budget=100, n_runs=3, base_seed=50)
    singles = tuple(run_de(inst, RAND1, budget=100, seed=50 + r) for r in range(3))
    assert rec.raw_precisions == singles


def test_all_strategies_run():
    inst = make_instance(1, 1, 3)
    for config in default_portfolio(3) + [
        DeConfig("C2B", "current-to-best/1/bin", 0.7, 0.8, 20)
    ]:
        value = run_de(inst, config, budget=3 * config.population_size, seed=5)
        assert value >= 0.0


def test_median_log_examples():
    assert median_log_precision([1.0, 100.0, 10000.0]) == pytest.approx(2.0)
    assert median_log_precision([0.0, 0.0, 0.0]) == pytest.approx(-8.0)
    assert median_log_precision([1.0, 1000.0]) == pytest.approx(np.log10(500.5))


def test_measure_median_and_floor():
    inst = ConstantInstance()
    rec = measure(inst, RAND1, budget=40, n_runs=3, base_seed=0)
    assert rec.median_log_precision == pytest.approx(-8.0)
    assert len(rec.raw_precisions) == 3


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DeConfig("bad", "rand/7/bin", 0.5, 0.9, 20)
    with pytest.raises(ConfigurationError):
        DeConfig("bad", "rand/1/bin", 0.0, 0.9, 20)
    with pytest.raises(ConfigurationError):
        DeConfig("bad", "rand/1/bin", 0.5, 1.5, 20)
    with pytest.raises(ConfigurationError):
        DeConfig("bad", "rand/1/bin", 0.5, 0.9, 3)
    with pytest.raises(ConfigurationError):
        DeConfig("bad", "rand/2/bin", 0.5, 0.9, 5)  # rand/2 needs >= 6
    DeConfig("ok", "rand/2/bin", 0.5, 0.9, 6)


def test_default_portfolio_population_cap():
    assert default_population_size(5) == 50
    assert default_population_size(30) == 100
    portfolio = default_portfolio(10)
    assert [c.config_id for c in portfolio] == ["DE1", "DE2", "DE3"]
    assert all(c.population_size == 100 for c in portfolio)


def test_n_runs_validated():
    with pytest.raises(ConfigurationError):
        measure(ConstantInstance(), RAND1, budget=40, n_runs=0, base_seed=0)


def test_performance_csv_roundtrip(tmp_path):
    inst = make_instance(1, 1, 3)
    records = [measure(inst, RAND1, budget=60, n_runs=2, base_seed=s) for s in (0, 10)]
    path = tmp_path / "performance.csv"
    write_performance_csv(records, path)
    loaded = read_performance_csv(path)
    assert len(loaded) == 2
    assert loaded[0] == PerformanceRecord(
        config_id=records[0].config_id,
        problem_id=records[0].problem_id,
        instance_id=records[0].instance_id,
        dimension=records[0].dimension,
        raw_precisions=records[0].raw_precisions,
        median_log_precision=records[0].median_log_precision,
    )
