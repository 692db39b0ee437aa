import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omas_topology.excitation import ExcitationConfig
from omas_topology.model import (
    ModeSpec,
    Scenario,
    ScheduleRangeError,
    SwitchingSchedule,
    graph_from_matrix,
    is_hurwitz,
    matrix_from_graph,
    mode_at,
    validate_scenario,
)


def scenario_with(modes, times=(0.0,), seq=(1,), horizon=10.0, **kw):
    return Scenario(modes=tuple(modes), schedule=SwitchingSchedule(times, seq, horizon), **kw)


def test_hurwitz_scalar():
    rep = validate_scenario(scenario_with([ModeSpec(1, (0,), [[-2.0]])]))
    assert rep.hurwitz_per_mode == {1: True}
    assert not rep.is_fatal and not rep.warnings


def test_nilpotent_mode_warns_but_not_fatal():
    rep = validate_scenario(scenario_with([ModeSpec(1, (0, 1), [[0.0, 1.0], [0.0, 0.0]])]))
    assert rep.hurwitz_per_mode == {1: False}
    assert rep.warnings and not rep.is_fatal


def test_repeated_switch_time_is_fatal():
    sc = scenario_with([ModeSpec(1, (0,), [[-1.0]])], times=(0.0, 0.0), seq=(1, 1))
    assert validate_scenario(sc).is_fatal


@pytest.mark.parametrize(
    "kw",
    [
        dict(times=(0.5,), seq=(1,)),
        dict(times=(0.0, 2.0), seq=(1,)),
        dict(times=(0.0,), seq=(7,)),
        dict(times=(0.0, 12.0), seq=(1, 1)),
        dict(gamma=0.0),
        dict(step=-1e-3),
        dict(filter_gain=0.0),
    ],
)
def test_structural_errors_are_fatal(kw):
    assert validate_scenario(scenario_with([ModeSpec(1, (0,), [[-1.0]])], **kw)).is_fatal


def test_mode_spec_dimension_checks():
    with pytest.raises(ValueError):
        ModeSpec(1, (0, 1), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ModeSpec(1, (0, 0), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ModeSpec(1, (0, 1), np.zeros((2, 3)))


def test_mode_spec_canonical_order():
    # L[i, l] is the edge l -> i; reordering nodes must permute both axes
    m = ModeSpec(1, (5, 2), [[-1.0, 0.7], [0.0, -2.0]])
    assert m.node_ids == (2, 5)
    assert np.array_equal(m.L, [[-2.0, 0.0], [0.7, -1.0]])


def test_validate_is_pure():
    sc = scenario_with([ModeSpec(1, (0, 1), [[0.0, 1.0], [0.0, 0.0]])])
    a, b = validate_scenario(sc), validate_scenario(sc)
    assert (a.hurwitz_per_mode, a.warnings, a.errors) == (b.hurwitz_per_mode, b.warnings, b.errors)


SCHED = SwitchingSchedule((0.0, 1.0, 2.5), (1, 2, 1), 4.0)


def test_mode_at_left_closed():
    assert mode_at(SCHED, 1.0) == (1, 2)
    assert mode_at(SCHED, 1.0 - 1e-9) == (0, 1)
    assert mode_at(SCHED, 0.0) == (0, 1)
    assert mode_at(SCHED, 3.99) == (2, 1)


@pytest.mark.parametrize("t", [4.0, -0.1, 10.0])
def test_mode_at_out_of_range(t):
    with pytest.raises(ScheduleRangeError):
        mode_at(SCHED, t)


@settings(max_examples=200, deadline=None)
@given(
    dwells=st.lists(st.floats(0.01, 5.0), min_size=1, max_size=8),
    frac=st.floats(0, 1, exclude_max=True),
)
def test_intervals_partition_horizon(dwells, frac):
    times = np.concatenate([[0.0], np.cumsum(dwells)[:-1]])
    horizon = float(np.sum(dwells))
    sched = SwitchingSchedule(tuple(times), tuple(range(len(dwells))), horizon)
    t = frac * horizon
    k, _ = mode_at(sched, t)
    hits = [j for j in range(len(dwells)) if sched.interval_bounds(j)[0] <= t < sched.interval_bounds(j)[1]]
    assert hits == [k]


def test_graph_examples():
    assert graph_from_matrix([[0.0, 0.5], [0.0, 0.0]], tol=0) == [(1, 0, 0.5)]
    assert graph_from_matrix(np.zeros((3, 3)), tol=0) == []
    assert sorted(graph_from_matrix(-np.eye(2), tol=0)) == [(0, 0, -1.0), (1, 1, -1.0)]


def test_graph_non_square():
    with pytest.raises(ValueError):
        graph_from_matrix(np.zeros((2, 3)))


def test_graph_default_tolerance_drops_dust():
    assert graph_from_matrix([[1e-12, 0.0], [0.0, 1.0]]) == [(1, 1, 1.0)]


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 6), seed=st.integers(0, 10**6), tol=st.sampled_from([0.0, 1e-9, 0.3]))
def test_graph_roundtrip(n, seed, tol):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.5)
    back = matrix_from_graph(graph_from_matrix(L, tol), n)
    assert np.all(np.abs(back - L) <= tol)
    assert np.all((back == L) | (np.abs(L) <= tol))


def test_is_hurwitz():
    assert is_hurwitz([[-1.0, 5.0], [0.0, -0.1]])
    assert not is_hurwitz([[0.0, 1.0], [-1.0, 0.0]])


def test_scenario_defaults():
    sc = scenario_with([ModeSpec(1, (0,), [[-1.0]])])
    assert sc.filter_gain == 0.05 and sc.gamma == 0.1 and sc.step == 1e-3
    assert isinstance(sc.excitation, ExcitationConfig)
