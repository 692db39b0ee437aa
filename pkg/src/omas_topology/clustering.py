"""Mode clustering of time segments by projection-based dissimilarity.

Two segments of the same mode have local least-squares operators that agree
on each other's excitation subspaces. The dissimilarity sums the two
disagreement norms; segments are then grouped by average-linkage
agglomerative clustering inside each vertex-set group.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import format_group_key
from .numerics import frobenius, pinv, range_projector


class MissingModeCountError(KeyError):
    pass


@dataclass(frozen=True, eq=False)
class SegmentOperator:
    interval_index: int
    L_local: np.ndarray
    P: np.ndarray
    rank: int

    @property
    def unexcited(self):
        return self.rank == 0


@dataclass(eq=False)
class DissimilarityMatrix:
    group_id: str
    indices: list
    D: np.ndarray


@dataclass(eq=False)
class ClusterAssignment:
    labels: dict
    merge_history: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    unexcited: list = field(default_factory=list)


def segment_operator(record, rank_tol=None):
    """Local operator ``Z Y^+`` and excitation projector ``Y Y^+``."""
    Y = record.Y_s
    P, rank = range_projector(Y, rank_tol)
    return SegmentOperator(
        interval_index=record.interval_index,
        L_local=record.Z_s @ pinv(Y, rank_tol),
        P=P,
        rank=rank,
    )


def dissimilarity(a, b):
    if a.L_local.shape != b.L_local.shape:
        raise ValueError(f"dimension mismatch: {a.L_local.shape} vs {b.L_local.shape}")
    if a is b:
        return 0.0
    return frobenius(a.L_local @ b.P - b.L_local @ b.P) + frobenius(
        b.L_local @ a.P - a.L_local @ a.P
    )


def group_by_vertex_set(records):
    """Partition records by node-ID set, groups ordered by first appearance."""
    groups = {}
    for r in records:
        groups.setdefault(tuple(sorted(r.node_ids)), []).append(r)
    return groups


def dissimilarity_matrix(operators, group_id=""):
    n = len(operators)
    D = np.zeros((n, n))
    for s in range(n):
        for r in range(s + 1, n):
            D[s, r] = D[r, s] = dissimilarity(operators[s], operators[r])
    return DissimilarityMatrix(group_id, [op.interval_index for op in operators], D)


def agglomerative_cluster(D, n_clusters):
    """Average-linkage agglomerative clustering down to ``n_clusters``.

    Returns ``(labels, merges)``. ``labels[i]`` numbers clusters 0.. in order
    of their smallest member. ``merges`` lists ``(a, b, height)`` with
    scipy-style ids: singletons are ``0..n-1`` and the cluster created by
    the ``j``-th merge is ``n + j``. Equal-distance pairs are resolved by
    the smallest ``(min member, max member)`` pair of cluster minima.
    """
    D = np.asarray(getattr(D, "D", D), dtype=float)
    n = D.shape[0]
    if D.shape != (n, n):
        raise ValueError("distance matrix must be square")
    if not 1 <= n_clusters <= max(n, 1) or n == 0:
        raise ValueError(f"cluster count {n_clusters} out of range for {n} points")

    # active clusters keyed by their smallest member
    members = {i: [i] for i in range(n)}
    ids = {i: i for i in range(n)}
    dist = D.copy()
    merges = []
    next_id = n
    while len(members) > n_clusters:
        keys = sorted(members)
        best = None
        for ia, a in enumerate(keys):
            for b in keys[ia + 1 :]:
                cand = (dist[a, b], a, b)
                if best is None or cand < best:
                    best = cand
        h, a, b = best
        na, nb = len(members[a]), len(members[b])
        for c in keys:
            if c not in (a, b):
                dist[a, c] = dist[c, a] = (na * dist[a, c] + nb * dist[b, c]) / (na + nb)
        merges.append((ids[a], ids[b], float(h)))
        members[a] = sorted(members[a] + members[b])
        del members[b]
        ids[a] = next_id
        del ids[b]
        next_id += 1

    labels = np.empty(n, dtype=int)
    for lab, key in enumerate(sorted(members)):
        labels[members[key]] = lab
    return labels.tolist(), merges


def cluster_modes(records, mode_counts, rank_tol=None):
    """Label every segment with a mode, independently per vertex set.

    Labels are 1-based and globally unique: the first group uses
    ``1..M^1``, the next continues from ``M^1 + 1`` and so on. Segments
    with an all-zero Gramian carry no mode information; they are clustered
    last, joining the cluster at the smallest average dissimilarity.
    """
    groups = group_by_vertex_set(records)
    labels = {}
    out = ClusterAssignment(labels=labels)
    offset = 0
    for gi, (key, recs) in enumerate(groups.items()):
        if key not in mode_counts:
            raise MissingModeCountError(f"no mode count for vertex set {format_group_key(key)}")
        M = int(mode_counts[key])
        gid = f"g{gi}"
        ops = [segment_operator(r, rank_tol) for r in recs]
        dm = dissimilarity_matrix(ops, gid)
        out.distances[gid] = dm
        out.groups[gid] = {"nodes": list(key), "indices": dm.indices, "n_modes": M}

        live = [i for i, op in enumerate(ops) if not op.unexcited]
        dead = [i for i, op in enumerate(ops) if op.unexcited]
        out.unexcited.extend(ops[i].interval_index for i in dead)
        if len(live) < M:
            live, dead = list(range(len(ops))), []
        sub = dm.D[np.ix_(live, live)]
        sub_labels, merges = agglomerative_cluster(sub, M)
        local = dict(zip(live, sub_labels))
        for i in dead:
            avg = [np.mean([dm.D[i, j] for j in live if local[j] == c]) for c in range(M)]
            local[i] = int(np.argmin(avg))
        # merge ids refer to the clustered leaves, in order
        out.merge_history[gid] = merges
        out.groups[gid]["leaves"] = [ops[i].interval_index for i in live]
        for i, op in enumerate(ops):
            labels[op.interval_index] = offset + local[i] + 1
        offset += M
    return out

