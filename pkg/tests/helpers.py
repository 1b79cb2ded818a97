"""Shared configuration generators for the slower tests."""

import numpy as np

from risuplink.channel import table_config
from risuplink.optimizer import single_user_design


def single_user_configs(count=10, seed=0):
    """Random single-user configs; at least one per x0R case (1, 2, 3)."""
    rng = np.random.default_rng(seed)
    by_case = {1: [], 2: [], 3: []}
    while min(len(v) for v in by_case.values()) == 0 or sum(len(v) for v in by_case.values()) < count:
        cfg = table_config(
            M=int(rng.choice([4, 8, 16, 64])),
            N=int(rng.choice([4, 9, 16, 25, 36, 64])),
            K=1,
            delta=float(10 ** rng.uniform(-2, 2)),
            epsilon=float(10 ** rng.uniform(-2, 2)),
            gamma=float(10 ** rng.uniform(-16, -9)),
            p=float(10 ** rng.uniform(-4, 1)),
        )
        by_case[single_user_design(cfg).case].append(cfg)
    picked = [v[0] for v in by_case.values()]
    rest = [c for v in by_case.values() for c in v[1:]]
    return picked + rest[: count - len(picked)]
