"""Cross-interval aggregation of terminal Gramians.

If every segment of a mode satisfies ``Z_s = L Y_s`` then the sums do too,
so ``L`` is recovered from ``sum(Z_s) @ inv(sum(Y_s))`` as soon as the
summed excitation Gramian is positive definite, even when no single
segment is.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import frobenius, is_pd_above, min_eig, solve_right

POLICIES = ("first_crossing", "all")


class GroupingError(ValueError):
    pass


@dataclass(eq=False)
class ModeEstimate:
    mode_label: int
    node_ids: tuple
    L_hat: np.ndarray | None
    contributing_segments: list
    triggered_at: int | None = None
    aggregated_Y_min_eig: float = 0.0
    error_vs_truth: float | None = None
    true_mode: int | None = None

    @property
    def under_excited(self):
        return self.L_hat is None

    def to_dict(self):
        return {
            "mode_label": self.mode_label,
            "node_ids": list(self.node_ids),
            "L_hat": None if self.L_hat is None else self.L_hat.tolist(),
            "contributing_segments": list(self.contributing_segments),
            "triggered_at": self.triggered_at,
            "aggregated_Y_min_eig": self.aggregated_Y_min_eig,
            "error_vs_truth": self.error_vs_truth,
            "true_mode": self.true_mode,
        }


def aggregate_mode(segments, gamma, policy="all", mode_label=0):
    """Sum terminal Gramians of ``segments`` and solve for the topology.

    ``first_crossing`` stops at the shortest prefix whose summed Y exceeds
    ``gamma * I``; ``all`` uses every segment. Returns ``None`` when the
    threshold is never crossed.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    segments = list(segments)
    if not segments:
        raise GroupingError("no segments to aggregate")
    ids = segments[0].node_ids
    for s in segments[1:]:
        if s.node_ids != ids:
            raise GroupingError(
                f"segment {s.interval_index} has vertex set {s.node_ids}, expected {ids}"
            )

    n = len(ids)
    Y = np.zeros((n, n))
    Z = np.zeros((n, n))
    used = []
    triggered = None
    for i, s in enumerate(segments, start=1):
        Y = Y + s.Y_s
        Z = Z + s.Z_s
        used.append(s.interval_index)
        if triggered is None and is_pd_above(Y, gamma):
            triggered = i
            if policy == "first_crossing":
                break

    if triggered is None:
        return None
    return ModeEstimate(
        mode_label=mode_label,
        node_ids=ids,
        L_hat=solve_right(Z, Y),
        contributing_segments=used,
        triggered_at=triggered,
        aggregated_Y_min_eig=min_eig(Y),
    )


def estimation_error(L_hat, L_true):
    L_hat = np.asarray(L_hat, dtype=float)
    L_true = np.asarray(L_true, dtype=float)
    if L_hat.shape != L_true.shape:
        raise ValueError(f"dimension mismatch: {L_hat.shape} vs {L_true.shape}")
    return frobenius(L_hat - L_true)


def segments_by_mode(records):
    """Group records by their ground-truth mode, in order of first appearance."""
    out = {}
    for r in records:
        if r.true_mode is None:
            raise GroupingError(f"segment {r.interval_index} carries no ground-truth mode")
        out.setdefault(r.true_mode, []).append(r)
    return out
