"""Scenario description for an open multi-agent system.

A scenario is a library of modes (node set + connectivity matrix), a
switching schedule over those modes, and the excitation / filter settings
used by the simulator.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

from .excitation import ExcitationConfig

EDGE_TOL = 1e-9


class ScheduleRangeError(ValueError):
    pass


def group_key(node_ids):
    """Canonical key of a vertex set: the sorted tuple of node IDs."""
    return tuple(sorted(int(i) for i in node_ids))


def format_group_key(key):
    return ",".join(str(i) for i in key)


def parse_group_key(text):
    text = str(text).strip()
    if not text:
        return ()
    return group_key(int(p) for p in text.split(","))


@dataclass(frozen=True, eq=False)
class ModeSpec:
    """One interaction topology.

    ``L[i, l]`` is the weight of the edge ``node_ids[l] -> node_ids[i]``.
    Node IDs are stored in ascending order; ``L`` is permuted to match.
    """

    mode_id: int
    node_ids: tuple
    L: np.ndarray

    def __post_init__(self):
        ids = tuple(int(i) for i in self.node_ids)
        L = np.array(self.L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValueError(f"mode {self.mode_id}: L must be square, got {L.shape}")
        if L.shape[0] != len(ids):
            raise ValueError(
                f"mode {self.mode_id}: L is {L.shape[0]}x{L.shape[0]} but has {len(ids)} nodes"
            )
        if len(set(ids)) != len(ids):
            raise ValueError(f"mode {self.mode_id}: node_ids must be distinct")
        order = np.argsort(ids, kind="stable")
        L = L[np.ix_(order, order)]
        L.setflags(write=False)
        object.__setattr__(self, "node_ids", tuple(ids[i] for i in order))
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "mode_id", int(self.mode_id))

    @property
    def size(self):
        return len(self.node_ids)

    @property
    def key(self):
        return self.node_ids

    def to_dict(self):
        return {"id": self.mode_id, "nodes": list(self.node_ids), "L": self.L.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(mode_id=d["id"], node_ids=tuple(d["nodes"]), L=np.array(d["L"], dtype=float))


@dataclass(frozen=True)
class SwitchingSchedule:
    switch_times: tuple
    mode_of_interval: tuple
    horizon: float

    def __post_init__(self):
        object.__setattr__(self, "switch_times", tuple(float(t) for t in self.switch_times))
        object.__setattr__(self, "mode_of_interval", tuple(int(m) for m in self.mode_of_interval))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def num_intervals(self):
        return len(self.switch_times)

    def interval_bounds(self, k):
        start = self.switch_times[k]
        end = self.switch_times[k + 1] if k + 1 < len(self.switch_times) else self.horizon
        return start, end

    def dwell_times(self):
        return [e - s for s, e in (self.interval_bounds(k) for k in range(self.num_intervals))]

    def to_dict(self):
        return {
            "switch_times": list(self.switch_times),
            "mode_sequence": list(self.mode_of_interval),
            "horizon": self.horizon,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(switch_times=d["switch_times"], mode_of_interval=d["mode_sequence"], horizon=d["horizon"])


def mode_at(schedule, t):
    """Return ``(k, mode_id)`` for the interval ``[t^k, t^{k+1})`` holding ``t``."""
    if not (schedule.switch_times and schedule.switch_times[0] <= t < schedule.horizon):
        raise ScheduleRangeError(f"t={t} outside [0, {schedule.horizon})")
    k = bisect.bisect_right(schedule.switch_times, t) - 1
    return k, schedule.mode_of_interval[k]


@dataclass(frozen=True)
class DynamicsSpec:
    """Known internal dynamics ``f_i(x_i)``: zero, or ``a_i * x_i``."""

    kind: str = "zero"
    coefficients: dict = field(default_factory=dict)
    default: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "linear"):
            raise ValueError(f"unsupported dynamics kind {self.kind!r}")

    def coeffs(self, node_ids):
        if self.kind == "zero":
            return np.zeros(len(node_ids))
        return np.array([self.coefficients.get(int(i), self.default) for i in node_ids], dtype=float)

    def evaluate(self, x, node_ids):
        return self.coeffs(node_ids) * x

    def to_dict(self):
        out = {"kind": self.kind}
        if self.kind == "linear":
            out["coefficients"] = {str(k): float(v) for k, v in sorted(self.coefficients.items())}
            out["default"] = float(self.default)
        return out

    @classmethod
    def from_dict(cls, d):
        if isinstance(d, str):
            return cls(kind=d)
        return cls(
            kind=d.get("kind", "zero"),
            coefficients={int(k): float(v) for k, v in d.get("coefficients", {}).items()},
            default=float(d.get("default", 0.0)),
        )


@dataclass(frozen=True, eq=False)
class ReferenceSpec:
    """Choice of the auxiliary-system matrix ``L_m`` per vertex set."""

    kind: str = "zero"
    matrices: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("zero", "identity", "explicit"):
            raise ValueError(f"unsupported reference kind {self.kind!r}")
        mats = {}
        for key, M in self.matrices.items():
            key = group_key(key)
            M = np.array(M, dtype=float)
            if M.shape != (len(key), len(key)):
                raise ValueError(f"reference matrix for {format_group_key(key)} has shape {M.shape}")
            M.setflags(write=False)
            mats[key] = M
        object.__setattr__(self, "matrices", mats)

    def matrix_for(self, key):
        key = group_key(key)
        if key in self.matrices:
            return np.array(self.matrices[key])
        if self.kind == "identity":
            return np.eye(len(key))
        return np.zeros((len(key), len(key)))

    def to_dict(self):
        return {
            "kind": self.kind,
            "matrices": [
                {"nodes": list(k), "L": v.tolist()} for k, v in sorted(self.matrices.items())
            ],
        }

    @classmethod
    def from_dict(cls, d):
        if d is None:
            return cls()
        return cls(
            kind=d.get("kind", "zero"),
            matrices={tuple(m["nodes"]): m["L"] for m in d.get("matrices", [])},
        )


@dataclass(frozen=True, eq=False)
class Scenario:
    modes: tuple
    schedule: SwitchingSchedule
    excitation: ExcitationConfig = field(default_factory=ExcitationConfig)
    dynamics_f: DynamicsSpec = field(default_factory=DynamicsSpec)
    initial_states: dict = field(default_factory=dict)
    seed: int = 0
    filter_gain: float = 0.05
    gamma: float = 0.1
    step: float = 1e-3
    mode_counts: dict = field(default_factory=dict)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    rank_tol: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(
            self, "initial_states", {int(k): float(v) for k, v in self.initial_states.items()}
        )
        object.__setattr__(
            self, "mode_counts", {group_key(k): int(v) for k, v in self.mode_counts.items()}
        )

    def mode(self, mode_id):
        for m in self.modes:
            if m.mode_id == mode_id:
                return m
        raise KeyError(f"unknown mode {mode_id}")

    @property
    def mode_table(self):
        return {m.mode_id: m for m in self.modes}

    def max_nodes(self):
        return max((m.size for m in self.modes), default=0)

    def to_dict(self):
        return {
            "modes": [m.to_dict() for m in self.modes],
            "schedule": self.schedule.to_dict(),
            "excitation": self.excitation.to_dict(),
            "dynamics_f": self.dynamics_f.to_dict(),
            "initial_states": {str(k): v for k, v in sorted(self.initial_states.items())},
            "filter_gain": self.filter_gain,
            "gamma": self.gamma,
            "step": self.step,
            "mode_counts": {format_group_key(k): v for k, v in sorted(self.mode_counts.items())},
            "seed": self.seed,
            "reference": self.reference.to_dict(),
            "rank_tol": self.rank_tol,
        }


@dataclass
class ValidationReport:
    hurwitz_per_mode: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def is_fatal(self):
        return bool(self.errors)


def is_hurwitz(L):
    L = np.asarray(L, dtype=float)
    if L.size == 0:
        return True
    return bool(np.all(np.linalg.eigvals(L).real < 0))


def validate_scenario(scenario):
    """Check structure (fatal) and modelling assumptions (warnings only)."""
    rep = ValidationReport()
    table = {}
    for m in scenario.modes:
        if m.mode_id in table:
            rep.errors.append(f"duplicate mode id {m.mode_id}")
        table[m.mode_id] = m
        if not np.all(np.isfinite(m.L)):
            rep.errors.append(f"mode {m.mode_id}: non-finite entries in L")
            continue
        ok = is_hurwitz(m.L)
        rep.hurwitz_per_mode[m.mode_id] = ok
        if not ok:
            rep.warnings.append(
                f"mode {m.mode_id} is not Hurwitz; state boundedness is not guaranteed"
            )

    for name in ("filter_gain", "gamma", "step"):
        val = getattr(scenario, name)
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            rep.errors.append(f"{name} must be strictly positive, got {val}")

    sched = scenario.schedule
    times = sched.switch_times
    if not times:
        rep.errors.append("schedule has no intervals")
    else:
        if times[0] != 0.0:
            rep.errors.append(f"first switch time must be 0, got {times[0]}")
        for k in range(1, len(times)):
            if not times[k] > times[k - 1]:
                rep.errors.append(f"switch times not strictly increasing at index {k}")
        if not sched.horizon > times[-1]:
            rep.errors.append(f"horizon {sched.horizon} must exceed last switch time {times[-1]}")
    if len(sched.mode_of_interval) != len(times):
        rep.errors.append(
            f"{len(sched.mode_of_interval)} mode entries for {len(times)} switch times"
        )
    dangling = sorted({m for m in sched.mode_of_interval if m not in table})
    for m in dangling:
        rep.errors.append(f"schedule references unknown mode {m}")

    if scenario.mode_counts and not rep.errors:
        used = {table[m].key for m in sched.mode_of_interval}
        for key in used:
            if key not in scenario.mode_counts:
                rep.warnings.append(f"no mode count for vertex set {format_group_key(key)}")

    if not rep.errors and scenario.step > 0:
        for k, dwell in enumerate(sched.dwell_times()):
            if dwell < scenario.step:
                rep.warnings.append(f"interval {k} is shorter than one integration step")
    return rep


def graph_from_matrix(L, tol=EDGE_TOL):
    """Weighted directed edges ``(source, target, weight)`` encoded in ``L``.

    ``L[i, l]`` with ``i != l`` is the edge ``l -> i``; a nonzero diagonal
    entry is a self-loop. Indices are 0-based matrix positions.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"L must be square, got shape {L.shape}")
    edges = []
    for i, l in zip(*np.nonzero(np.abs(L) > tol)):
        edges.append((int(l), int(i), float(L[i, l])))
    edges.sort(key=lambda e: (e[1], e[0]))
    return edges


def matrix_from_graph(edges, n):
    L = np.zeros((n, n))
    for src, dst, w in edges:
        L[dst, src] = w
    return L
