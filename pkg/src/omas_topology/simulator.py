"""Plant simulation and per-interval Gramian accumulation.

On every switching interval the plant ``x' = f(x) + L x + u`` is integrated
together with an auxiliary observer ``x_hat``, a first-order filter ``w``
and the Gramians

    Y' = w w^T,    Z' = (L_m w + x - x_hat - zeta) w^T,

which satisfy ``Z(t) = L Y(t)`` for the true connectivity ``L``. Each
interval yields a :class:`SegmentRecord` holding the terminal ``(Y, Z)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .excitation import build_excitation
from .model import validate_scenario
from .numerics import NumericError, frobenius, is_pd_above, min_eig, rk4_step, solve_right

log = logging.getLogger(__name__)

CHUNK_STEPS = 20000


class DivergenceError(RuntimeError):
    def __init__(self, interval, message=""):
        self.interval = interval
        super().__init__(f"state diverged on interval {interval}" + (f": {message}" if message else ""))


class ScenarioValidationError(ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("; ".join(report.errors))


@dataclass(frozen=True, eq=False)
class SegmentRecord:
    interval_index: int
    node_ids: tuple
    t_start: float
    t_end: float
    Y_s: np.ndarray
    Z_s: np.ndarray
    t_terminal: float | None = None
    interval_estimate: np.ndarray | None = None
    crossing_time: float | None = None
    true_mode: int | None = None

    def __post_init__(self):
        n = len(self.node_ids)
        Y = np.asarray(self.Y_s, dtype=float)
        Z = np.asarray(self.Z_s, dtype=float)
        if Y.shape != (n, n) or Z.shape != (n, n):
            raise ValueError(
                f"segment {self.interval_index}: Gramians {Y.shape}/{Z.shape} for {n} nodes"
            )
        object.__setattr__(self, "node_ids", tuple(int(i) for i in self.node_ids))
        object.__setattr__(self, "Y_s", Y)
        object.__setattr__(self, "Z_s", Z)
        if self.interval_estimate is not None:
            object.__setattr__(self, "interval_estimate", np.asarray(self.interval_estimate, dtype=float))

    @property
    def key(self):
        return self.node_ids

    def to_dict(self):
        est = self.interval_estimate
        return {
            "interval_index": self.interval_index,
            "node_ids": list(self.node_ids),
            "t_start": self.t_start,
            "t_end": self.t_end,
            "t_terminal": self.t_terminal,
            "Y_s": self.Y_s.tolist(),
            "Z_s": self.Z_s.tolist(),
            "interval_estimate": None if est is None else est.tolist(),
            "crossing_time": self.crossing_time,
            "true_mode": self.true_mode,
        }

    @classmethod
    def from_dict(cls, d):
        est = d.get("interval_estimate")
        return cls(
            interval_index=int(d["interval_index"]),
            node_ids=tuple(d["node_ids"]),
            t_start=float(d["t_start"]),
            t_end=float(d["t_end"]),
            t_terminal=d.get("t_terminal"),
            Y_s=np.array(d["Y_s"], dtype=float),
            Z_s=np.array(d["Z_s"], dtype=float),
            interval_estimate=None if est is None else np.array(est, dtype=float),
            crossing_time=d.get("crossing_time"),
            true_mode=d.get("true_mode"),
        )


@dataclass(eq=False)
class AugmentedState:
    x_hat: np.ndarray
    w: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    x_tilde_k: np.ndarray
    L_m: np.ndarray

    @classmethod
    def reset(cls, x_k, L_m):
        n = len(x_k)
        x_k = np.asarray(x_k, dtype=float)
        return cls(
            x_hat=np.zeros(n),
            w=np.zeros(n),
            Y=np.zeros((n, n)),
            Z=np.zeros((n, n)),
            x_tilde_k=x_k.copy(),
            L_m=np.asarray(L_m, dtype=float),
        )

    def pack(self):
        return np.concatenate([self.x_hat, self.w, self.Y.ravel(), self.Z.ravel()])

    def unpack(self, vec):
        n = len(self.x_hat)
        return AugmentedState(
            x_hat=vec[:n],
            w=vec[n : 2 * n],
            Y=vec[2 * n : 2 * n + n * n].reshape(n, n),
            Z=vec[2 * n + n * n :].reshape(n, n),
            x_tilde_k=self.x_tilde_k,
            L_m=self.L_m,
        )


@dataclass
class IntervalDiagnostics:
    interval_index: int
    steps: int
    max_residual_ratio: float
    max_zeta_mismatch: float
    min_increment_eig: float
    max_w_norm: float
    max_x_norm: float
    terminal_min_eig: float


@dataclass
class TrajectoryChunk:
    node_ids: tuple
    times: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    w: np.ndarray


@dataclass
class SimulationResult:
    records: list
    diagnostics: list = field(default_factory=list)
    trajectory: list | None = None
    final_states: dict = field(default_factory=dict)


def control_input(u_hat, f_of_x):
    """Cancel the known internal dynamics: ``u = u_hat - f(x)``."""
    u_hat = np.asarray(u_hat, dtype=float)
    f_of_x = np.asarray(f_of_x, dtype=float)
    if u_hat.shape != f_of_x.shape:
        raise ValueError(f"dimension mismatch: {u_hat.shape} vs {f_of_x.shape}")
    return u_hat - f_of_x


def zeta(t, t_k, filter_gain, x_tilde_k):
    if t < t_k:
        raise ValueError(f"zeta requested at t={t} before interval start {t_k}")
    return math.exp(-filter_gain * (t - t_k)) * np.asarray(x_tilde_k, dtype=float)


def augmented_derivative(aug, x, u, f_of_x, zeta_t, filter_gain):
    """Time derivative of the observer / filter / Gramian state."""
    n = len(aug.x_hat)
    for name, v in (("x", x), ("u", u), ("f(x)", f_of_x), ("zeta", zeta_t), ("w", aug.w)):
        if np.shape(v) != (n,):
            raise ValueError(f"{name} has shape {np.shape(v)}, expected ({n},)")
    tau = filter_gain
    L_m = aug.L_m
    w = aug.w
    dx_hat = f_of_x + L_m @ x + u + tau * (x - aug.x_hat)
    dw = x - tau * w
    dY = np.outer(w, w)
    dZ = np.outer(L_m @ w + x - aug.x_hat - zeta_t, w)
    return AugmentedState(dx_hat, dw, dY, dZ, aug.x_tilde_k, L_m)


def interval_estimate(Y, Z, gamma):
    """``Z Y^{-1}`` if ``Y`` exceeds ``gamma * I``, else ``None``."""
    Y = np.asarray(Y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Y.shape != Z.shape or Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: Y {Y.shape}, Z {Z.shape}")
    if not is_pd_above(Y, gamma):
        return None
    return solve_right(Z, Y)


def grid_steps(t_start, t_end, h):
    """Number of full steps ``floor((t_end - t_start) / h)``, robust to roundoff."""
    return int(math.floor((t_end - t_start) / h + 1e-9))


class _NodeStates:
    """Handoff of agent states across switches."""

    def __init__(self, initial_states, seed):
        self.current = {}
        self.seen = set()
        self.initial = dict(initial_states)
        self.rng = np.random.default_rng(seed)

    def enter(self, node_ids):
        x = np.empty(len(node_ids))
        for j, i in enumerate(node_ids):
            if i in self.current:
                x[j] = self.current[i]
            elif i not in self.seen and i in self.initial:
                x[j] = self.initial[i]
            else:
                x[j] = self.rng.uniform(-1.0, 1.0)
            self.seen.add(i)
        return x

    def leave(self, node_ids, x):
        self.current = {int(i): float(v) for i, v in zip(node_ids, x)}


def _affine_rk4_stages(S, T, A, B, u_hat, h):
    """Stage states of RK4 on ``s' = A s + B u_hat(t)`` from each row of ``S``.

    Returns the four stage states (each shaped like ``S``) and the next state.
    """
    At = A.T
    b1 = u_hat(T) @ B.T
    b2 = u_hat(T + 0.5 * h) @ B.T
    b4 = u_hat(T + h) @ B.T
    k1 = S @ At + b1
    s2 = S + 0.5 * h * k1
    k2 = s2 @ At + b2
    s3 = S + 0.5 * h * k2
    k3 = s3 @ At + b2
    s4 = S + h * k3
    k4 = s4 @ At + b4
    nxt = S + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return (S, s2, s3, s4), nxt


def _rk4_polynomial(A, h):
    n = A.shape[0]
    hA = h * A
    term = np.eye(n)
    Phi = np.eye(n)
    for j in range(1, 5):
        term = term @ hA / j
        Phi = Phi + term
    return Phi


class _IntervalRun:
    """Integrates one interval; shared by the fast and the generic paths."""

    def __init__(self, k, node_ids, L, L_m, f_coeffs, u_hat, x0, t_start, t_end, scenario, true_mode):
        self.k = k
        self.node_ids = node_ids
        self.L = L
        self.L_m = L_m
        self.f_coeffs = f_coeffs
        self.u_hat = u_hat
        self.x0 = x0
        self.t_start = t_start
        self.t_end = t_end
        self.tau = scenario.filter_gain
        self.gamma = scenario.gamma
        self.h = scenario.step
        self.true_mode = true_mode
        self.n_steps = grid_steps(t_start, t_end, self.h)


def _simulate_interval_fast(run, log_stride):
    n = len(run.node_ids)
    h, tau = run.h, run.tau
    L, L_m = run.L, run.L_m
    I = np.eye(n)
    O = np.zeros((n, n))
    # f cancels against the control input, leaving x' = L x + u_hat.
    A = np.block([[L, O, O], [L_m + tau * I, -tau * I, O], [I, O, -tau * I]])
    B = np.vstack([I, I, O])
    Phi_t = _rk4_polynomial(A, h).T
    weights = np.array([1.0, 2.0, 2.0, 1.0]) * (h / 6.0)
    offsets = np.array([0.0, 0.5, 0.5, 1.0]) * h

    s = np.concatenate([run.x0, np.zeros(2 * n)])
    x_tilde = run.x0.copy()
    Y = np.zeros((n, n))
    Z = np.zeros((n, n))
    crossing = None
    resid = 0.0
    zeta_mis = 0.0
    inc_eig = np.inf
    w_max = 0.0
    x_max = float(np.linalg.norm(run.x0))
    traj = []
    Lt = L.T

    done = 0
    while done < run.n_steps:
        m = min(CHUNK_STEPS, run.n_steps - done)
        T = run.t_start + (done + np.arange(m)) * h
        # offsets of the affine recurrence s_{l+1} = Phi s_l + c_l
        _, C = _affine_rk4_stages(np.zeros((m, 3 * n)), T, A, B, run.u_hat, h)
        S = np.empty((m + 1, 3 * n))
        S[0] = s
        with np.errstate(over="ignore", invalid="ignore"):
            for l in range(m):
                S[l + 1] = S[l] @ Phi_t + C[l]
        if not np.all(np.isfinite(S)):
            raise DivergenceError(run.k, f"non-finite state near t={T[-1]:.6g}")
        stages, _ = _affine_rk4_stages(S[:-1], T, A, B, run.u_hat, h)

        dY = np.zeros((m, n, n))
        dZ = np.zeros((m, n, n))
        for st, wt, off in zip(stages, weights, offsets):
            xs, xh, ws = st[:, :n], st[:, n : 2 * n], st[:, 2 * n :]
            z = np.exp(-tau * (T + off - run.t_start))[:, None] * x_tilde
            br = ws @ L_m.T + xs - xh - z
            dY += wt * np.einsum("li,lj->lij", ws, ws)
            dZ += wt * np.einsum("li,lj->lij", br, ws)
        Ycum = Y + np.cumsum(dY, axis=0)
        Zcum = Z + np.cumsum(dZ, axis=0)
        if not (np.all(np.isfinite(Ycum)) and np.all(np.isfinite(Zcum))):
            raise DivergenceError(run.k, "non-finite Gramian")

        if crossing is None and min_eig(Ycum[-1]) > run.gamma:
            lo, hi = 0, m - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if min_eig(Ycum[mid]) > run.gamma:
                    hi = mid
                else:
                    lo = mid + 1
            crossing = (
                run.t_start + (done + lo + 1) * h,
                solve_right(Zcum[lo], Ycum[lo]),
            )

        # invariant diagnostics on grid points t_{l+1}
        R = Zcum - L @ Ycum
        rn = np.sqrt(np.sum(R * R, axis=(1, 2)))
        yn = np.sqrt(np.sum(Ycum * Ycum, axis=(1, 2)))
        resid = max(resid, float(np.max(rn / (1.0 + yn))))
        Sg = S[1:]
        xs, xh, ws = Sg[:, :n], Sg[:, n : 2 * n], Sg[:, 2 * n :]
        q = xs - xh + ws @ (L_m - L).T
        z = np.exp(-tau * (T + h - run.t_start))[:, None] * x_tilde
        zeta_mis = max(zeta_mis, float(np.max(np.abs(q - z))))
        inc_eig = min(inc_eig, float(np.min(np.linalg.eigvalsh(dY))))
        w_max = max(w_max, float(np.max(np.linalg.norm(S[:, 2 * n :], axis=1))))
        x_max = max(x_max, float(np.max(np.linalg.norm(S[:, :n], axis=1))))

        if log_stride:
            idx = np.arange(0, m + 1, log_stride)
            if done > 0:
                idx = idx[idx > 0]
            traj.append(
                TrajectoryChunk(
                    run.node_ids,
                    run.t_start + (done + idx) * h,
                    S[idx, :n].copy(),
                    S[idx, n : 2 * n].copy(),
                    S[idx, 2 * n :].copy(),
                )
            )

        s = S[-1]
        Y, Z = Ycum[-1], Zcum[-1]
        done += m

    return s[:n].copy(), Y, Z, crossing, (resid, zeta_mis, inc_eig, w_max, x_max), traj


def _simulate_interval_generic(run, log_stride):
    """Literal joint RK4 on (x, x_hat, w, Y, Z) through :func:`augmented_derivative`."""
    n = len(run.node_ids)
    h, tau = run.h, run.tau
    L = run.L
    a = run.f_coeffs
    aug0 = AugmentedState.reset(run.x0, run.L_m)

    def deriv(vec, t):
        x = vec[:n]
        aug = aug0.unpack(vec[n:])
        f_x = a * x
        u = control_input(run.u_hat(t), f_x)
        dx = f_x + L @ x + u
        z = zeta(t, run.t_start, tau, aug0.x_tilde_k)
        d = augmented_derivative(aug, x, u, f_x, z, tau)
        return np.concatenate([dx, d.pack()])

    vec = np.concatenate([run.x0, aug0.pack()])
    crossing = None
    resid = zeta_mis = 0.0
    inc_eig = np.inf
    w_max = 0.0
    x_max = float(np.linalg.norm(run.x0))
    rows = [(run.t_start, vec.copy())] if log_stride else []
    for l in range(run.n_steps):
        t = run.t_start + l * h
        try:
            new = rk4_step(vec, t, h, deriv)
        except NumericError as exc:
            raise DivergenceError(run.k, str(exc)) from exc
        if not np.all(np.isfinite(new)):
            raise DivergenceError(run.k, f"non-finite state near t={t:.6g}")
        st_old = aug0.unpack(vec[n:])
        vec = new
        st = aug0.unpack(vec[n:])
        tn = t + h
        inc_eig = min(inc_eig, float(np.linalg.eigvalsh(st.Y - st_old.Y)[0]))
        resid = max(resid, frobenius(st.Z - L @ st.Y) / (1.0 + frobenius(st.Y)))
        q = vec[:n] - st.x_hat + (run.L_m - L) @ st.w
        zeta_mis = max(zeta_mis, float(np.max(np.abs(q - zeta(tn, run.t_start, tau, aug0.x_tilde_k)))))
        w_max = max(w_max, float(np.linalg.norm(st.w)))
        x_max = max(x_max, float(np.linalg.norm(vec[:n])))
        if crossing is None and is_pd_above(st.Y, run.gamma):
            crossing = (tn, solve_right(st.Z, st.Y))
        if log_stride and (l + 1) % log_stride == 0:
            rows.append((tn, vec.copy()))
    st = aug0.unpack(vec[n:])
    traj = []
    if log_stride and rows:
        times = np.array([r[0] for r in rows])
        V = np.array([r[1] for r in rows])
        traj.append(TrajectoryChunk(run.node_ids, times, V[:, :n], V[:, n : 2 * n], V[:, 2 * n : 3 * n]))
    return vec[:n].copy(), st.Y.copy(), st.Z.copy(), crossing, (resid, zeta_mis, inc_eig, w_max, x_max), traj


def simulate_scenario(scenario, *, method="fast", log_trajectory=False, log_stride=1):
    """Run the plant and the identification filters over the whole schedule.

    ``method="fast"`` exploits that the plant/observer/filter block is affine
    in the state; ``method="generic"`` evaluates the augmented derivative
    stage by stage. Both take identical RK4 steps.
    """
    report = validate_scenario(scenario)
    if report.is_fatal:
        raise ScenarioValidationError(report)
    for w in report.warnings:
        log.warning(w)
    if method not in ("fast", "generic"):
        raise ValueError(f"unknown method {method!r}")

    excitation = build_excitation(max(scenario.max_nodes(), 1), scenario.excitation)
    table = scenario.mode_table
    sched = scenario.schedule
    h = scenario.step
    states = _NodeStates(scenario.initial_states, scenario.seed)
    records, diags, trajectory = [], [], [] if log_trajectory else None
    stride = max(1, int(log_stride)) if log_trajectory else 0

    for k in range(sched.num_intervals):
        mode = table[sched.mode_of_interval[k]]
        ids = mode.node_ids
        t_start, t_end = sched.interval_bounds(k)
        x0 = states.enter(ids)
        run = _IntervalRun(
            k,
            ids,
            np.array(mode.L),
            scenario.reference.matrix_for(ids),
            scenario.dynamics_f.coeffs(ids),
            excitation.for_nodes(ids),
            x0,
            t_start,
            t_end,
            scenario,
            mode.mode_id,
        )
        sim = _simulate_interval_fast if method == "fast" else _simulate_interval_generic
        x_term, Y, Z, crossing, stats, traj = sim(run, stride)

        t_term = t_start + run.n_steps * h
        rem = t_end - t_term
        x_end = x_term
        if rem > 1e-12 * max(1.0, abs(t_end)):
            # carry the plant alone to the switching instant
            def plant(x, t, L=run.L, u_hat=run.u_hat):
                return L @ x + u_hat(t)

            try:
                x_end = rk4_step(x_term, t_term, rem, plant)
            except NumericError as exc:
                raise DivergenceError(k, str(exc)) from exc
        states.leave(ids, x_end)

        records.append(
            SegmentRecord(
                interval_index=k,
                node_ids=ids,
                t_start=t_start,
                t_end=t_end,
                t_terminal=t_term,
                Y_s=Y,
                Z_s=Z,
                interval_estimate=None if crossing is None else crossing[1],
                crossing_time=None if crossing is None else crossing[0],
                true_mode=mode.mode_id,
            )
        )
        resid, zmis, inc, wmax, xmax = stats
        if not np.isfinite(inc):
            inc = 0.0  # no steps taken
        diags.append(
            IntervalDiagnostics(
                interval_index=k,
                steps=run.n_steps,
                max_residual_ratio=resid,
                max_zeta_mismatch=zmis,
                min_increment_eig=inc,
                max_w_norm=wmax,
                max_x_norm=xmax,
                terminal_min_eig=min_eig(Y),
            )
        )
        if trajectory is not None:
            trajectory.extend(traj)
        log.debug("interval %d: mode %d, %d steps, crossing=%s", k, mode.mode_id, run.n_steps, crossing is not None)

    return SimulationResult(records, diags, trajectory, dict(states.current))
