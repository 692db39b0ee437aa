"""Sum-of-sinusoids excitation signals.

Every agent receives the same set of frequencies with agent-specific phases,
so the excitation vector spans up to ``2 * len(frequencies)`` directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ExcitationError(ValueError):
    pass


def default_frequencies(count):
    """Evenly spaced frequencies in rad/s, starting at 0.3 with step 0.45."""
    return [0.3 + 0.45 * j for j in range(count)]


def required_frequencies(n):
    return max(1, math.ceil(n / 2))


@dataclass(frozen=True)
class ExcitationConfig:
    """Configuration for the probing input.

    Empty ``frequencies`` means auto-generate the minimum count needed for
    the largest vertex set. Empty ``amplitudes`` means unit amplitude.
    ``phases`` optionally pins the phase vector of individual agents;
    all other phases are drawn from ``seed``.
    """

    frequencies: tuple = ()
    amplitudes: tuple = ()
    phases: dict = field(default_factory=dict)
    seed: int = 0
    min_order: int | None = None

    def to_dict(self):
        return {
            "frequencies": [float(w) for w in self.frequencies],
            "amplitudes": [float(a) for a in self.amplitudes],
            "phases": {str(k): [float(p) for p in v] for k, v in sorted(self.phases.items())},
            "seed": int(self.seed),
            "min_order": self.min_order,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            frequencies=tuple(float(w) for w in d.get("frequencies", ())),
            amplitudes=tuple(float(a) for a in d.get("amplitudes", ())),
            phases={int(k): tuple(float(p) for p in v) for k, v in d.get("phases", {}).items()},
            seed=int(d.get("seed", 0)),
            min_order=d.get("min_order"),
        )


@dataclass(frozen=True)
class Excitation:
    """A resolved excitation signal; ``values(t, node_ids)`` evaluates it."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    config: ExcitationConfig

    def phases_for(self, node_id):
        pinned = self.config.phases.get(int(node_id))
        if pinned is not None:
            if len(pinned) != len(self.frequencies):
                raise ExcitationError(
                    f"node {node_id}: {len(pinned)} phases for {len(self.frequencies)} frequencies"
                )
            return np.asarray(pinned, dtype=float)
        rng = np.random.default_rng([int(self.config.seed), int(node_id)])
        return rng.uniform(0.0, 2.0 * np.pi, size=len(self.frequencies))

    def phase_matrix(self, node_ids):
        return np.array([self.phases_for(i) for i in node_ids]).reshape(len(node_ids), -1)

    def values(self, t, node_ids):
        """Evaluate at scalar or 1-D ``t``; returns shape ``t.shape + (n,)``."""
        t = np.asarray(t, dtype=float)
        phi = self.phase_matrix(node_ids)  # (n, F)
        arg = t[..., None, None] * self.frequencies + phi  # (..., n, F)
        return np.sin(arg) @ self.amplitudes

    def bound(self):
        return float(np.sum(np.abs(self.amplitudes)))

    def for_nodes(self, node_ids):
        ids = list(node_ids)
        phi = self.phase_matrix(ids)
        freqs, amps = self.frequencies, self.amplitudes

        def u_hat(t):
            t = np.asarray(t, dtype=float)
            return np.sin(t[..., None, None] * freqs + phi) @ amps

        return u_hat


def build_excitation(n, config):
    """Resolve ``config`` into a signal sufficiently rich of order ``n``.

    Raises ExcitationError when fewer than ``ceil(order/2)`` distinct
    frequencies are configured.
    """
    if n < 1:
        raise ExcitationError("order n must be at least 1")
    order = config.min_order if config.min_order is not None else n
    need = required_frequencies(order)
    freqs = list(config.frequencies) or default_frequencies(need)
    freqs = np.asarray(freqs, dtype=float)
    if np.any(freqs <= 0):
        raise ExcitationError("frequencies must be positive")
    if len(np.unique(freqs)) != len(freqs):
        raise ExcitationError("frequencies must be pairwise distinct")
    if len(freqs) < need:
        raise ExcitationError(
            f"order {order} needs at least {need} distinct frequencies, got {len(freqs)}"
        )
    if config.amplitudes:
        amps = np.asarray(config.amplitudes, dtype=float)
        if amps.shape != freqs.shape:
            raise ExcitationError("one amplitude per frequency is required")
        if np.any(amps <= 0):
            raise ExcitationError("amplitudes must be positive")
    else:
        amps = np.ones_like(freqs)
    return Excitation(frequencies=freqs, amplitudes=amps, config=config)
