"""Scenario generators.

The reference preset has eight agents with two interaction modes, joined
by two more agents while the group switches among three further modes.
Coupling matrices are drawn as sparse weighted directed graphs with a
strictly dominant negative diagonal, so every mode is Hurwitz.
"""

from __future__ import annotations

import numpy as np

from .excitation import ExcitationConfig, default_frequencies
from .model import ModeSpec, ReferenceSpec, Scenario, SwitchingSchedule

SMALL = tuple(range(8))
LARGE = tuple(range(10))
DWELL_RANGE = (4.0, 60.0)
BLOCKS = 4


def random_connectivity(n, rng, max_in=3, weight=(0.2, 1.0), margin=(0.5, 1.5)):
    L = np.zeros((n, n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        k = int(rng.integers(1, max_in + 1))
        nbrs = rng.choice(others, size=k, replace=False)
        L[i, nbrs] = rng.uniform(*weight, size=k) * rng.choice([-1.0, 1.0], size=k)
    L[np.diag_indices(n)] = -(np.abs(L).sum(axis=1) + rng.uniform(*margin, size=n))
    return L


def reference_ring(n, weight=0.3):
    return -np.eye(n) + weight * np.roll(np.eye(n), 1, axis=1)


def gen_paper_preset(seed=0):
    rng = np.random.default_rng(seed)
    modes = [
        ModeSpec(1, SMALL, random_connectivity(len(SMALL), rng)),
        ModeSpec(2, SMALL, random_connectivity(len(SMALL), rng)),
        ModeSpec(3, LARGE, random_connectivity(len(LARGE), rng)),
        ModeSpec(4, LARGE, random_connectivity(len(LARGE), rng)),
        ModeSpec(5, LARGE, random_connectivity(len(LARGE), rng)),
    ]
    # each block: the 8-agent modes, then agents 8 and 9 join for the
    # 10-agent modes; they leave again at the start of the next block
    seq = []
    for _ in range(BLOCKS):
        seq += [int(m) for m in rng.permutation([1, 2])]
        seq += [int(m) for m in rng.permutation([3, 4, 5])]
    dwell = np.round(rng.uniform(*DWELL_RANGE, size=len(seq)), 3)
    times = np.round(np.concatenate([[0.0], np.cumsum(dwell)[:-1]]), 3)
    horizon = round(float(np.sum(dwell)), 3)
    initial = {int(i): float(v) for i, v in zip(SMALL, rng.uniform(-1.0, 1.0, size=len(SMALL)))}

    n_freq = (len(LARGE) + 1) // 2
    return Scenario(
        modes=tuple(modes),
        schedule=SwitchingSchedule(tuple(float(t) for t in times), tuple(seq), horizon),
        excitation=ExcitationConfig(
            frequencies=tuple(default_frequencies(n_freq)),
            amplitudes=tuple([1.0] * n_freq),
            seed=int(seed),
        ),
        initial_states=initial,
        seed=int(seed),
        filter_gain=0.05,
        gamma=0.1,
        step=1e-3,
        mode_counts={SMALL: 2, LARGE: 3},
        reference=ReferenceSpec(
            "explicit",
            {SMALL: reference_ring(len(SMALL)), LARGE: reference_ring(len(LARGE))},
        ),
    )


def gen_short_dwell_scenario(seed=1, n_nodes=5, occurrences=30, dwell=2.0, n_modes=2):
    """Modes on one vertex set alternating with dwell times too short for
    any single interval to exceed the excitation threshold."""
    rng = np.random.default_rng(seed)
    ids = tuple(range(n_nodes))
    modes = tuple(
        ModeSpec(j + 1, ids, random_connectivity(n_nodes, rng)) for j in range(n_modes)
    )
    seq = [j + 1 for _ in range(occurrences) for j in range(n_modes)]
    times = tuple(round(dwell * i, 3) for i in range(len(seq)))
    return Scenario(
        modes=modes,
        schedule=SwitchingSchedule(times, tuple(seq), round(dwell * len(seq), 3)),
        excitation=ExcitationConfig(seed=int(seed)),
        seed=int(seed),
        mode_counts={ids: n_modes},
    )
