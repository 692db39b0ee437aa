"""Acceptance checks, runnable as ``omas-topology acceptance``.

Each check returns a :class:`CheckResult`; ``run_all`` prints one
PASS/FAIL line per check. The preset pipeline is executed twice through
the CLI and the two runs are shared by the checks that need them.
"""

from __future__ import annotations

import contextlib
import io as _io
import json
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .clustering import agglomerative_cluster, dissimilarity, segment_operator
from .estimation import aggregate_mode, estimation_error
from .model import ModeSpec, Scenario, SwitchingSchedule
from .numerics import frobenius, pinv, rk4_step
from .preset import gen_paper_preset, gen_short_dwell_scenario
from .simulator import SegmentRecord, simulate_scenario

PRESET_ERROR_TOL = 1e-6
PRESET_RUNTIME_S = 60.0
RESIDUAL_TOL = 1e-6
SINGLE_INTERVAL_TOL = 1e-8
MACHINE_TOL = 1e-14
SHORT_DWELL_TOL = 1e-6
PROJECTOR_TOL = 1e-10
NESTED_TOL = 1e-8
SEPARATION_TOL = 1e-9
PENROSE_TOL = 1e-10
RK4_RATIO = (12.0, 20.0)


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


@dataclass
class PresetRuns:
    report_a: dict
    report_b_bytes: bytes
    report_a_bytes: bytes
    runtime_a: float
    scenario: Scenario


def run_preset_twice(seed=0, workdir=None):
    from .cli import main

    with contextlib.ExitStack() as stack:
        if workdir is None:
            workdir = stack.enter_context(tempfile.TemporaryDirectory())
        work = Path(workdir)
        scen = work / "preset.json"
        io.save_scenario(gen_paper_preset(seed), scen)
        sink = _io.StringIO()
        with contextlib.redirect_stdout(sink):
            t0 = time.perf_counter()
            rc_a = main(["run", "--scenario", str(scen), "--out", str(work / "a")])
            runtime = time.perf_counter() - t0
            rc_b = main(["run", "--scenario", str(scen), "--out", str(work / "b")])
        if rc_a or rc_b:
            raise RuntimeError(f"run exited with {rc_a}/{rc_b}")
        a = (work / "a" / "report.json").read_bytes()
        b = (work / "b" / "report.json").read_bytes()
        return PresetRuns(json.loads(a), b, a, runtime, io.load_scenario(scen))


def check_preset_recovery(runs):
    est = runs.report_a["estimates"]
    errs = {e["true_mode"]: e["error_vs_truth"] for e in est}
    ok = (
        len(est) == 5
        and sorted(errs) == [1, 2, 3, 4, 5]
        and all(v is not None and v <= PRESET_ERROR_TOL for v in errs.values())
        and runs.runtime_a <= PRESET_RUNTIME_S
    )
    detail = ", ".join(f"mode {m}: {v:.2e}" for m, v in sorted(errs.items()))
    return CheckResult(1, "preset topology recovery", ok, f"{detail}; run {runs.runtime_a:.1f}s")


def check_clustering(runs):
    acc = runs.report_a["per_group_accuracy"]
    ok = len(acc) == 2 and all(v == 1.0 for v in acc.values())
    return CheckResult(2, "preset clustering accuracy", ok, json.dumps(acc, sort_keys=True))


def check_residual(runs):
    worst = max(d["max_residual_ratio"] for d in runs.report_a["diagnostics"]["intervals"])
    return CheckResult(
        3, "Z = L Y along every interval", worst <= RESIDUAL_TOL, f"max ratio {worst:.2e}"
    )


def single_interval_scenario(dwell=200.0):
    L = np.array([[-1.0, 0.5], [0.0, -1.0]])
    return Scenario(
        modes=(ModeSpec(1, (0, 1), L),),
        schedule=SwitchingSchedule((0.0,), (1,), dwell),
        filter_gain=0.05,
        gamma=0.1,
        step=1e-3,
        mode_counts={(0, 1): 1},
    )


def check_single_interval():
    sc = single_interval_scenario()
    rec = simulate_scenario(sc).records[0]
    if rec.interval_estimate is None:
        return CheckResult(4, "single-interval exactness", False, "threshold never crossed")
    err = estimation_error(rec.interval_estimate, sc.modes[0].L)
    return CheckResult(4, "single-interval exactness", err <= SINGLE_INTERVAL_TOL, f"error {err:.2e}")


def rank_one_pair():
    a = SegmentRecord(0, (0, 1), 0.0, 1.0, np.diag([1.0, 0.0]), np.array([[1.0, 0.0], [3.0, 0.0]]))
    b = SegmentRecord(1, (0, 1), 1.0, 2.0, np.diag([0.0, 1.0]), np.array([[0.0, 2.0], [0.0, 4.0]]))
    return a, b


def check_aggregation():
    L = np.array([[1.0, 2.0], [3.0, 4.0]])
    est = aggregate_mode(rank_one_pair(), 0.5)
    closed = estimation_error(est.L_hat, L) if est else np.inf

    sc = gen_short_dwell_scenario()
    recs = simulate_scenario(sc).records
    crossed = sum(r.interval_estimate is not None for r in recs)
    errs = []
    for m in sc.modes:
        e = aggregate_mode([r for r in recs if r.true_mode == m.mode_id], sc.gamma)
        errs.append(np.inf if e is None else estimation_error(e.L_hat, m.L))
    ok = closed <= MACHINE_TOL and crossed == 0 and max(errs) <= SHORT_DWELL_TOL
    return CheckResult(
        5,
        "aggregation exactness",
        ok,
        f"closed form {closed:.1e}; short dwell {crossed} crossings, errors "
        + ", ".join(f"{e:.2e}" for e in errs),
    )


def nested_pair(rng, n=5):
    """Same-mode segments with ran(Y_b) inside ran(Y_a)."""
    L = rng.normal(size=(n, n))
    G = rng.normal(size=(n, n))
    Ya = G @ G.T + n * np.eye(n)
    V = rng.normal(size=(n, 2))
    Yb = V @ V.T
    a = SegmentRecord(0, tuple(range(n)), 0, 1, Ya, L @ Ya)
    b = SegmentRecord(1, tuple(range(n)), 1, 2, Yb, L @ Yb)
    return L, a, b


def check_projections(seed=3):
    rng = np.random.default_rng(seed)
    proj = 0.0
    nested = 0.0
    sep = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 11))
        r = int(rng.integers(0, n + 1))
        V = rng.normal(size=(n, r))
        Y = V @ V.T
        op = segment_operator(SegmentRecord(0, tuple(range(n)), 0, 1, Y, rng.normal(size=(n, n)) @ Y))
        proj = max(proj, frobenius(op.P - op.P.T), frobenius(op.P @ op.P - op.P))

        L, a, b = nested_pair(rng)
        oa, ob = segment_operator(a), segment_operator(b)
        nested = max(nested, frobenius(oa.L_local @ ob.P - ob.L_local @ ob.P))

        L1, L2 = rng.normal(size=(2, n, n))
        G1, G2 = rng.normal(size=(2, n, n))
        Y1 = G1 @ G1.T + np.eye(n)
        Y2 = G2 @ G2.T + np.eye(n)
        d = dissimilarity(
            segment_operator(SegmentRecord(0, tuple(range(n)), 0, 1, Y1, L1 @ Y1)),
            segment_operator(SegmentRecord(1, tuple(range(n)), 1, 2, Y2, L2 @ Y2)),
        )
        sep = max(sep, abs(d - 2.0 * frobenius(L1 - L2)))
    ok = proj <= PROJECTOR_TOL and nested <= NESTED_TOL and sep <= SEPARATION_TOL
    return CheckResult(
        6, "projection identities", ok, f"projector {proj:.1e}, nested {nested:.1e}, separation {sep:.1e}"
    )


def penrose_residuals(A, Ap):
    nA = max(frobenius(A), 1e-300)
    nAp = max(frobenius(Ap), 1e-300)
    return (
        frobenius(A @ Ap @ A - A) / nA,
        frobenius(Ap @ A @ Ap - Ap) / nAp,
        frobenius((A @ Ap).T - A @ Ap) / max(frobenius(A @ Ap), 1e-300),
        frobenius((Ap @ A).T - Ap @ A) / max(frobenius(Ap @ A), 1e-300),
    )


def random_test_matrix(rng):
    m, n = (int(v) for v in rng.integers(1, 13, size=2))
    r = int(rng.integers(1, min(m, n) + 1))
    return rng.normal(size=(m, r)) @ rng.normal(size=(r, n))


def rk4_error_ratio(h=0.1, horizon=1.0):
    def global_error(step):
        y, t = np.array([1.0]), 0.0
        for _ in range(int(round(horizon / step))):
            y = rk4_step(y, t, step, lambda s, _t: s)
            t += step
        return abs(y[0] - np.exp(horizon))

    return global_error(h) / global_error(h / 2)


def greedy_average_linkage_oracle(D, k):
    """Recompute every cluster-pair average from scratch at each merge."""
    clusters = [[i] for i in range(len(D))]
    heights = []
    while len(clusters) > k:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                avg = sum(D[p][q] for p in clusters[i] for q in clusters[j]) / (
                    len(clusters[i]) * len(clusters[j])
                )
                key = (avg, min(clusters[i]), min(clusters[j]))
                if best is None or key < best[0]:
                    best = (key, i, j)
        (h, _, _), i, j = best
        heights.append(h)
        merged = sorted(clusters[i] + clusters[j])
        clusters = [c for t, c in enumerate(clusters) if t not in (i, j)] + [merged]
    clusters.sort(key=min)
    labels = [0] * len(D)
    for lab, c in enumerate(clusters):
        for p in c:
            labels[p] = lab
    return labels, heights


def check_numerics(seed=7):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(100):
        A = random_test_matrix(rng)
        worst = max(worst, *penrose_residuals(A, pinv(A)))
    ratio = rk4_error_ratio()
    mismatches = 0
    for _ in range(100):
        P = rng.uniform(size=(7, 2))
        D = np.sqrt(((P[:, None] - P[None]) ** 2).sum(-1))
        k = int(rng.integers(1, 8))
        labels, merges = agglomerative_cluster(D, k)
        o_labels, o_heights = greedy_average_linkage_oracle(D, k)
        if labels != o_labels or not np.allclose([m[2] for m in merges], o_heights, rtol=0, atol=1e-12):
            mismatches += 1
    ok = worst <= PENROSE_TOL and RK4_RATIO[0] <= ratio <= RK4_RATIO[1] and mismatches == 0
    return CheckResult(
        7, "numerics oracles", ok, f"penrose {worst:.1e}, rk4 ratio {ratio:.2f}, linkage mismatches {mismatches}"
    )


def check_determinism(runs):
    same = runs.report_a_bytes == runs.report_b_bytes
    return CheckResult(8, "byte-identical report.json", same, "identical" if same else "differs")


def run_all(verbose=False, runs=None):
    runs = runs or run_preset_twice()
    results = [
        check_preset_recovery(runs),
        check_clustering(runs),
        check_residual(runs),
        check_single_interval(),
        check_aggregation(),
        check_projections(),
        check_numerics(),
        check_determinism(runs),
    ]
    if verbose:
        for r in results:
            print(r.line())
    return results
