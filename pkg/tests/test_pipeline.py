import csv
import dataclasses
import json

import numpy as np
import pytest

from omas_topology import io
from omas_topology.cli import EXIT_DIVERGENCE, EXIT_VALIDATION, main
from omas_topology.model import ModeSpec, Scenario, SwitchingSchedule, is_hurwitz, validate_scenario
from omas_topology.pipeline import estimate_from_labels, evaluate_labels, run_two_stage
from omas_topology.preset import gen_paper_preset, gen_short_dwell_scenario
from omas_topology.simulator import SegmentRecord, simulate_scenario


def test_evaluate_labels_examples():
    assert evaluate_labels({0: 1, 1: 1, 2: 2}, {0: 1, 1: 1, 2: 2}) == 1.0
    assert evaluate_labels({0: 2, 1: 2, 2: 1}, {0: 1, 1: 1, 2: 2}) == 1.0
    assert evaluate_labels({0: 1, 1: 1, 2: 1, 3: 2}, {0: 1, 1: 1, 2: 2, 3: 2}) == 0.75
    assert evaluate_labels({}, {}) == 1.0


def test_evaluate_labels_more_predicted_than_true():
    assert evaluate_labels({0: 1, 1: 2, 2: 3}, {0: 5, 1: 5, 2: 5}) == pytest.approx(1 / 3)


def test_evaluate_labels_index_mismatch():
    with pytest.raises(ValueError):
        evaluate_labels({0: 1}, {1: 1})


def test_two_stage_single_segment():
    L = np.array([[-1.0, 0.5], [0.2, -2.0]])
    rec = SegmentRecord(0, (0, 1), 0.0, 1.0, np.eye(2), L, true_mode=1)
    rep = run_two_stage([rec], {(0, 1): 1}, 0.5, modes={1: ModeSpec(1, (0, 1), L)})
    assert rep.labels == {0: 1}
    assert len(rep.estimates) == 1
    assert np.allclose(rep.estimates[0].L_hat, L)
    assert rep.per_mode_errors[1] <= 1e-14
    assert rep.per_group_accuracy == {"g0": 1.0}


def test_two_stage_reports_under_excited_cluster():
    L = np.eye(2)
    Y = np.diag([1.0, 0.0])
    rec = SegmentRecord(0, (0, 1), 0.0, 1.0, Y, L @ Y)
    rep = run_two_stage([rec], {(0, 1): 1}, 0.5)
    assert rep.estimates == []
    assert rep.diagnostics["under_excited_clusters"] == [1]


def test_short_dwell_pipeline_recovers_every_mode():
    sc = gen_short_dwell_scenario()
    recs = simulate_scenario(sc).records
    rep = run_two_stage(recs, sc.mode_counts, sc.gamma, modes=sc.mode_table)
    assert rep.diagnostics["intervals_with_estimate"] == 0
    assert rep.per_group_accuracy == {"g0": 1.0}
    assert sorted(e.true_mode for e in rep.estimates) == [1, 2]
    assert all(e.error_vs_truth <= 1e-6 for e in rep.estimates)


def test_estimate_from_labels_requires_every_interval():
    rec = SegmentRecord(3, (0,), 0.0, 1.0, np.eye(1), -np.eye(1))
    with pytest.raises(KeyError):
        estimate_from_labels([rec], {}, 0.1)
    assert np.allclose(estimate_from_labels([rec], {3: 7}, 0.1)[0].L_hat, [[-1.0]])


# scenario files


def test_scenario_roundtrip(tmp_path):
    sc = gen_paper_preset(4)
    io.save_scenario(sc, tmp_path / "s.json")
    back = io.load_scenario(tmp_path / "s.json")
    assert back.to_dict() == sc.to_dict()
    io.save_scenario(back, tmp_path / "t.json")
    assert (tmp_path / "s.json").read_bytes() == (tmp_path / "t.json").read_bytes()


def test_missing_field_is_named(tmp_path):
    d = gen_paper_preset().to_dict()
    del d["gamma"]
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(io.ScenarioFileError, match="gamma"):
        io.load_scenario(tmp_path / "s.json")


def test_parse_error_has_position(tmp_path):
    (tmp_path / "s.json").write_text('{\n  "modes": [\n    oops\n  ]\n}\n')
    with pytest.raises(io.ScenarioFileError, match="line 3"):
        io.load_scenario(tmp_path / "s.json")


def test_schema_type_error_names_path(tmp_path):
    d = gen_paper_preset().to_dict()
    d["schedule"]["horizon"] = "long"
    (tmp_path / "s.json").write_text(json.dumps(d))
    with pytest.raises(io.ScenarioFileError, match="schedule/horizon"):
        io.load_scenario(tmp_path / "s.json")


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_preset_is_well_formed(seed):
    sc = gen_paper_preset(seed)
    assert len(sc.modes) == 5
    assert sc.mode_counts == {tuple(range(8)): 2, tuple(range(10)): 3}
    assert sc.filter_gain == 0.05 and sc.gamma == 0.1 and sc.step == 1e-3
    assert all(is_hurwitz(m.L) for m in sc.modes)
    rep = validate_scenario(sc)
    assert not rep.is_fatal
    seq = sc.schedule.mode_of_interval
    assert len(seq) == 20 and set(seq) == {1, 2, 3, 4, 5}


def test_segments_roundtrip(tmp_path, rng):
    recs = [
        SegmentRecord(0, (0, 1), 0.0, 1.5, rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), true_mode=2),
        SegmentRecord(1, (0, 1, 2), 1.5, 3.0, rng.normal(size=(3, 3)), rng.normal(size=(3, 3))),
    ]
    io.write_segments(recs, tmp_path / "segments.jsonl")
    back = io.read_segments(tmp_path)
    for a, b in zip(recs, back):
        assert a.to_dict() == b.to_dict()
        assert np.array_equal(a.Y_s, b.Y_s) and np.array_equal(a.Z_s, b.Z_s)


def test_bad_segment_line_reports_line_number(tmp_path):
    (tmp_path / "segments.jsonl").write_text("{}\n")
    with pytest.raises(ValueError, match=":1:"):
        io.read_segments(tmp_path)


# command line


def small_scenario():
    L1 = np.array([[-1.0, 0.4], [0.3, -1.2]])
    L2 = np.array([[-1.5, -0.2], [0.6, -0.9]])
    L3 = np.array([[-1.0, 0.2, 0.0], [0.0, -1.3, 0.5], [0.4, 0.0, -1.1]])
    return Scenario(
        modes=(ModeSpec(1, (0, 1), L1), ModeSpec(2, (0, 1), L2), ModeSpec(3, (0, 1, 2), L3)),
        schedule=SwitchingSchedule((0.0, 30.0, 60.0, 90.0, 120.0), (1, 2, 3, 1, 2), 150.0),
        initial_states={0: 0.5, 1: -0.5},
        step=1e-2,
        mode_counts={(0, 1): 2, (0, 1, 2): 1},
    )


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    io.save_scenario(small_scenario(), d / "scenario.json")
    rc = main(["run", "--scenario", str(d / "scenario.json"), "--out", str(d / "out"), "--log-trajectory"])
    return d, rc


def test_run_writes_all_artifacts(small_run):
    d, rc = small_run
    out = d / "out"
    assert rc == 0
    for name in [
        "scenario.json", "segments.jsonl", "trajectory.csv", "labels.csv", "estimates.json",
        "report.json", "timing.json", "distances_g0.csv", "distances_g1.csv",
        "dendrogram_g0.json", "dendrogram_g1.json",
    ]:
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert "timing" not in report
    assert report["per_group_accuracy"] == {"g0": 1.0, "g1": 1.0}
    assert all(e["error_vs_truth"] <= 1e-6 for e in report["estimates"])
    assert len(report["diagnostics"]["intervals"]) == 5


def test_labels_csv_covers_every_interval(small_run):
    d, _ = small_run
    with open(d / "out" / "labels.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["interval_index"]) for r in rows] == [0, 1, 2, 3, 4]
    assert {r["group_id"] for r in rows} == {"g0", "g1"}


def test_trajectory_csv_layout(small_run):
    d, _ = small_run
    with open(d / "out" / "trajectory.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert header == ["time", "node_id", "x", "x_hat", "w"]


def test_distances_roundtrip(small_run):
    d, _ = small_run
    idx, D = io.read_distances(d / "out" / "distances_g0.csv")
    assert idx == [0, 1, 3, 4]
    assert np.array_equal(D, D.T) and D.shape == (4, 4)


def test_cluster_then_estimate_matches_run(small_run, tmp_path):
    d, _ = small_run
    seg_dir = d / "out"
    assert main(["cluster", "--segments", str(seg_dir), "--out", str(tmp_path / "c")]) == 0
    assert io.read_labels(tmp_path / "c" / "labels.csv") == io.read_labels(seg_dir / "labels.csv")
    assert main([
        "estimate", "--segments", str(seg_dir), "--labels", str(tmp_path / "c" / "labels.csv"),
        "--out", str(tmp_path / "e"),
    ]) == 0
    assert (tmp_path / "e" / "estimates.json").read_text() == (seg_dir / "estimates.json").read_text()


def test_simulate_and_gen_scenario(tmp_path):
    assert main(["gen-scenario", "--preset", "paper", "--seed", "2", "--out", str(tmp_path / "p.json")]) == 0
    assert io.load_scenario(tmp_path / "p.json").to_dict() == gen_paper_preset(2).to_dict()
    io.save_scenario(small_scenario(), tmp_path / "s.json")
    assert main(["simulate", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "sim")]) == 0
    assert len(io.read_segments(tmp_path / "sim")) == 5


def test_unknown_preset_is_validation_error(tmp_path):
    assert main(["gen-scenario", "--preset", "nope", "--out", str(tmp_path / "p.json")]) == EXIT_VALIDATION


def test_schema_error_exit_code(tmp_path, capsys):
    d = small_scenario().to_dict()
    del d["gamma"]
    (tmp_path / "s.json").write_text(json.dumps(d))
    assert main(["run", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION
    assert "gamma" in capsys.readouterr().err


def test_missing_mode_count_exit_code(tmp_path):
    sc = dataclasses.replace(small_scenario(), mode_counts={(0, 1): 2})
    io.save_scenario(sc, tmp_path / "s.json")
    assert main(["run", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")]) == EXIT_VALIDATION


def test_divergence_exit_code(tmp_path, capsys):
    sc = Scenario(
        modes=(ModeSpec(1, (0,), [[-1.0]]), ModeSpec(2, (0,), [[5.0]])),
        schedule=SwitchingSchedule((0.0, 1.0), (1, 2), 400.0),
        step=1e-2,
        mode_counts={(0,): 2},
    )
    io.save_scenario(sc, tmp_path / "s.json")
    assert main(["run", "--scenario", str(tmp_path / "s.json"), "--out", str(tmp_path / "o")]) == EXIT_DIVERGENCE
    assert "interval 1" in capsys.readouterr().err


def test_cluster_without_scenario_file(tmp_path):
    io.write_segments([SegmentRecord(0, (0,), 0, 1, np.eye(1), -np.eye(1))], tmp_path / "segments.jsonl")
    assert main(["cluster", "--segments", str(tmp_path), "--out", str(tmp_path / "c")]) == EXIT_VALIDATION
