"""Deterministic seed derivation.

All randomness in the pipeline flows from integer seed chains hashed with
numpy's SeedSequence, so per-item seeds can be assigned up front and work
items may run in any order (or in parallel) without changing results.
"""

from __future__ import annotations

import numpy as np

# Stage salts for the master-seed fan-out. Benchmark instances use
# SUITE_SALT without the master seed: the same (problem, instance,
# dimension) triple must define the same function in every run.
SUITE_SALT = 101
SOLVE_SALT = 202
FEATURES_SALT = 303
FOLDS_SALT = 404
TRAIN_SALT = 505
EXPLAIN_SALT = 606


def derive_seed(*parts: int) -> int:
    """Fold integer parts into one unsigned 64-bit seed."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, np.uint64)[0])
