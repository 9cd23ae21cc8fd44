import csv

import numpy as np
import pytest

from footprints.errors import ConfigurationError, ContractViolation
from footprints.suite import (
    N_PROBLEMS,
    ProblemInstance,
    SuiteConfig,
    make_instance,
    make_suite,
    precision,
    write_suite_csv,
)


def test_full_suite_has_120_instances():
    config = SuiteConfig(tuple(range(1, 25)), (1, 2, 3, 4, 5), 10)
    instances = make_suite(config)
    assert len(instances) == 120


def test_singleton_config():
    instances = make_suite(SuiteConfig((1,), (1,), 10))
    assert len(instances) == 1
    assert instances[0].key == (1, 1, 10)


def test_suite_order_problem_major():
    instances = make_suite(SuiteConfig((1, 2), (1, 2, 3), 5))
    assert [(i.problem_id, i.instance_id) for i in instances] == [
        (1, 1), (1, 2), (1, 3), (2, 1), (2, 2), (2, 3)
    ]


def test_unknown_problem_id_rejected():
    with pytest.raises(ConfigurationError):
        SuiteConfig((0,), (1,), 5)
    with pytest.raises(ConfigurationError):
        SuiteConfig((25,), (1,), 5)
    with pytest.raises(ConfigurationError):
        make_instance(99, 1, 5)


def test_bad_dimension_and_instance_rejected():
    with pytest.raises(ConfigurationError):
        SuiteConfig((1,), (1,), 1)
    with pytest.raises(ConfigurationError):
        SuiteConfig((1,), (0,), 5)


def test_sphere_optimum_is_offset_exactly():
    inst = make_instance(1, 1, 10)
    assert inst.evaluate(inst.shift) == inst.f_offset
    assert precision(inst, inst.evaluate(inst.shift)) == 0.0


def test_sphere_unit_step():
    inst = make_instance(1, 1, 10)
    e1 = np.zeros(10)
    e1[0] = 1.0
    assert inst.evaluate(inst.shift + e1) == pytest.approx(inst.f_offset + 1.0, abs=1e-12)


def test_instances_of_same_problem_differ():
    a = make_instance(1, 1, 10)
    b = make_instance(1, 2, 10)
    assert not np.allclose(a.shift, b.shift)
    # b's optimum is not a's optimum
    assert a.evaluate(b.shift) > a.f_offset


def test_precision_examples():
    inst = make_instance(1, 1, 5)
    assert precision(inst, inst.f_offset) == 0.0
    assert precision(inst, inst.f_offset + 3.5) == 3.5
    assert precision(inst, inst.f_offset - 1e-15) == 0.0  # rounding clamp


@pytest.mark.parametrize("problem_id", range(1, N_PROBLEMS + 1))
def test_optimum_exact_and_precision_nonnegative(problem_id):
    inst = make_instance(problem_id, 1, 5)
    assert inst.evaluate(inst.shift) == inst.f_offset
    rng = np.random.default_rng(1234 + problem_id)
    X = rng.uniform(-5.0, 5.0, (1000, 5))
    values = inst.evaluate_batch(X)
    assert np.all(np.isfinite(values))
    assert np.all(values - inst.f_offset >= -1e-9)
    assert all(precision(inst, v) >= 0.0 for v in values)


def test_bit_identical_reconstruction():
    rng = np.random.default_rng(5)
    X = rng.uniform(-5.0, 5.0, (50, 10))
    for problem_id in (3, 6, 17, 20, 21, 24):
        a = make_instance(problem_id, 2, 10)
        b = make_instance(problem_id, 2, 10)
        assert np.array_equal(a.shift, b.shift)
        assert a.f_offset == b.f_offset
        assert np.array_equal(a.evaluate_batch(X), b.evaluate_batch(X))


def test_shifts_pairwise_distinct_across_instances():
    for problem_id in (1, 8, 21):
        shifts = [make_instance(problem_id, i, 10).shift for i in range(1, 6)]
        for i in range(5):
            for j in range(i + 1, 5):
                assert not np.array_equal(shifts[i], shifts[j])


def test_optimum_inside_domain():
    for problem_id in range(1, N_PROBLEMS + 1):
        inst = make_instance(problem_id, 1, 10)
        assert np.all(inst.shift >= -4.0) and np.all(inst.shift <= 4.0)


def test_dimension_mismatch_is_contract_violation():
    inst = make_instance(1, 1, 5)
    with pytest.raises(ContractViolation):
        inst.evaluate(np.zeros(4))
    with pytest.raises(ContractViolation):
        inst.evaluate_batch(np.zeros((3, 6)))


def test_evaluation_allowed_outside_bounds():
    inst = make_instance(2, 1, 5)
    value = inst.evaluate(np.full(5, 7.5))
    assert np.isfinite(value)
    assert value >= inst.f_offset


def test_suite_csv_export(tmp_path):
    instances = make_suite(SuiteConfig((1, 2), (1, 2), 3))
    path = tmp_path / "suite.csv"
    write_suite_csv(instances, path)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert set(rows[0]) == {"problem_id", "instance_id", "dimension", "f_offset",
                            "shift_0", "shift_1", "shift_2"}
    first = instances[0]
    assert float(rows[0]["f_offset"]) == first.f_offset
    assert float(rows[0]["shift_1"]) == first.shift[1]


def test_instance_key_and_name():
    inst = make_instance(20, 3, 5)
    assert inst.key == (20, 3, 5)
    assert inst.name == "schwefel"
    assert isinstance(inst, ProblemInstance)
