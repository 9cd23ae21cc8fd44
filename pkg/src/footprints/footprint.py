"""Deterministic four-cluster footprint over (true performance, prediction error).

Labels pair algorithm performance (true value <= target t is Good) with
model performance (relative prediction error <= tolerance p is Good);
boundaries count as Good on both axes.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .de import PerformanceRecord
from .errors import ConfigurationError, ContractViolation

Key = tuple[int, int, int]


class FootprintLabel(enum.Enum):
    GOOD_GOOD = "good_good"
    GOOD_POOR = "good_poor"
    POOR_GOOD = "poor_good"
    POOR_POOR = "poor_poor"

    @property
    def algorithm_good(self) -> bool:
        return self in (FootprintLabel.GOOD_GOOD, FootprintLabel.GOOD_POOR)

    @property
    def model_good(self) -> bool:
        return self in (FootprintLabel.GOOD_GOOD, FootprintLabel.POOR_GOOD)


LABEL_ORDER = (
    FootprintLabel.GOOD_GOOD,
    FootprintLabel.GOOD_POOR,
    FootprintLabel.POOR_GOOD,
    FootprintLabel.POOR_POOR,
)


@dataclass(frozen=True)
class Thresholds:
    t: float
    p: float
    eps_guard: float = 1e-6

    def __post_init__(self):
        if self.p <= 0:
            raise ConfigurationError("tolerance p must be positive")
        if self.eps_guard <= 0:
            raise ConfigurationError("eps_guard must be positive")


@dataclass(frozen=True)
class FootprintAssignment:
    key: Key
    true_value: float
    predicted_value: float
    relative_error: float
    label: FootprintLabel
    fold_id: int
    model_kind: str


def compute_target_t(train_records: Sequence[PerformanceRecord]) -> float:
    """Median of the training records' median log precisions."""
    if not train_records:
        raise ContractViolation("need at least one training record")
    return float(np.median([rec.median_log_precision for rec in train_records]))


def relative_error(true_value: float, predicted_value: float, eps_guard: float = 1e-6) -> float:
    return abs(predicted_value - true_value) / max(abs(true_value), eps_guard)


def classify(true_value: float, predicted_value: float, thresholds: Thresholds) -> FootprintLabel:
    algorithm_good = true_value <= thresholds.t
    model_good = (
        relative_error(true_value, predicted_value, thresholds.eps_guard) <= thresholds.p
    )
    if algorithm_good:
        return FootprintLabel.GOOD_GOOD if model_good else FootprintLabel.GOOD_POOR
    return FootprintLabel.POOR_GOOD if model_good else FootprintLabel.POOR_POOR


def footprint_fold(
    predictions: Iterable[tuple[Key, float, float]],
    thresholds: Thresholds,
    fold_id: int,
    model_kind: str,
) -> list[FootprintAssignment]:
    """Label every (key, true, predicted) triple of one test fold."""
    assignments = []
    seen: set[Key] = set()
    for key, true_value, predicted_value in predictions:
        if key in seen:
            raise ContractViolation(f"duplicate instance key {key}")
        seen.add(key)
        assignments.append(
            FootprintAssignment(
                key=key,
                true_value=float(true_value),
                predicted_value=float(predicted_value),
                relative_error=relative_error(true_value, predicted_value, thresholds.eps_guard),
                label=classify(true_value, predicted_value, thresholds),
                fold_id=fold_id,
                model_kind=model_kind,
            )
        )
    return assignments


@dataclass(frozen=True)
class TransitionReport:
    pairs: tuple[tuple[Key, FootprintLabel, FootprintLabel], ...]
    counts: dict[tuple[FootprintLabel, FootprintLabel], int]

    def off_diagonal(self) -> list[tuple[FootprintLabel, FootprintLabel, int]]:
        return [
            (a, b, c) for (a, b), c in sorted(self.counts.items(),
                                              key=lambda kv: (kv[0][0].value, kv[0][1].value))
            if a != b
        ]


def sensitivity(
    assignments_a: Sequence[FootprintAssignment],
    assignments_b: Sequence[FootprintAssignment],
) -> TransitionReport:
    """Per-instance label transitions between two runs differing only in p."""
    by_key_a = {a.key: a for a in assignments_a}
    by_key_b = {b.key: b for b in assignments_b}
    if set(by_key_a) != set(by_key_b):
        raise ContractViolation("assignment sets cover different instances")
    pairs = []
    counts: dict[tuple[FootprintLabel, FootprintLabel], int] = {}
    for key in sorted(by_key_a):
        a, b = by_key_a[key], by_key_b[key]
        if (a.true_value, a.predicted_value) != (b.true_value, b.predicted_value):
            raise ContractViolation(f"predictions differ for {key}; only p may change")
        pairs.append((key, a.label, b.label))
        counts[(a.label, b.label)] = counts.get((a.label, b.label), 0) + 1
    return TransitionReport(pairs=tuple(pairs), counts=counts)


# ---------------------------------------------------------------------------
# CSV round trip

def write_assignments_csv(assignments: Sequence[FootprintAssignment], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["fold_id", "model_kind", "problem_id", "instance_id", "dimension",
             "true", "predicted", "relative_error", "label"]
        )
        for a in assignments:
            writer.writerow(
                [a.fold_id, a.model_kind, a.key[0], a.key[1], a.key[2],
                 repr(a.true_value), repr(a.predicted_value),
                 repr(a.relative_error), a.label.value]
            )


def read_assignments_csv(path) -> list[FootprintAssignment]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                FootprintAssignment(
                    key=(int(row["problem_id"]), int(row["instance_id"]), int(row["dimension"])),
                    true_value=float(row["true"]),
                    predicted_value=float(row["predicted"]),
                    relative_error=float(row["relative_error"]),
                    label=FootprintLabel(row["label"]),
                    fold_id=int(row["fold_id"]),
                    model_kind=row["model_kind"],
                )
            )
    return out


def write_transitions_csv(
    reports: Sequence[tuple[int, float, float, TransitionReport]], path
) -> None:
    """Rows: one per instance per (fold, p_from, p_to) sensitivity run."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["fold_id", "p_from", "p_to", "problem_id", "instance_id", "dimension",
             "label_from", "label_to"]
        )
        for fold_id, p_from, p_to, report in reports:
            for key, label_a, label_b in report.pairs:
                writer.writerow(
                    [fold_id, repr(p_from), repr(p_to), key[0], key[1], key[2],
                     label_a.value, label_b.value]
                )
