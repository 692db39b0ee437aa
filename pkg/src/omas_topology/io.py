"""Scenario files, segment streams and report artifacts."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .excitation import ExcitationConfig
from .model import (
    DynamicsSpec,
    ModeSpec,
    ReferenceSpec,
    Scenario,
    SwitchingSchedule,
    parse_group_key,
)
from .simulator import SegmentRecord


class ScenarioFileError(ValueError):
    """Unreadable or schema-violating scenario file."""


_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_number = {"type": "number"}

SCENARIO_SCHEMA = {
    "type": "object",
    "required": [
        "modes",
        "schedule",
        "excitation",
        "dynamics_f",
        "initial_states",
        "filter_gain",
        "gamma",
        "step",
        "mode_counts",
        "seed",
    ],
    "properties": {
        "modes": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "nodes", "L"],
                "properties": {
                    "id": {"type": "integer"},
                    "nodes": {"type": "array", "items": {"type": "integer"}},
                    "L": _matrix,
                },
            },
        },
        "schedule": {
            "type": "object",
            "required": ["switch_times", "mode_sequence", "horizon"],
            "properties": {
                "switch_times": {"type": "array", "items": _number},
                "mode_sequence": {"type": "array", "items": {"type": "integer"}},
                "horizon": _number,
            },
        },
        "excitation": {
            "type": "object",
            "properties": {
                "frequencies": {"type": "array", "items": _number},
                "amplitudes": {"type": "array", "items": _number},
                "phases": {"type": "object", "additionalProperties": {"type": "array", "items": _number}},
                "seed": {"type": "integer"},
                "min_order": {"type": ["integer", "null"]},
            },
        },
        "dynamics_f": {
            "oneOf": [
                {"type": "string", "enum": ["zero", "linear"]},
                {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["zero", "linear"]},
                        "coefficients": {"type": "object", "additionalProperties": _number},
                        "default": _number,
                    },
                },
            ]
        },
        "initial_states": {"type": "object", "additionalProperties": _number},
        "filter_gain": _number,
        "gamma": _number,
        "step": _number,
        "mode_counts": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}},
        "seed": {"type": "integer"},
        "reference": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["zero", "identity", "explicit"]},
                "matrices": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["nodes", "L"],
                        "properties": {"nodes": {"type": "array", "items": {"type": "integer"}}, "L": _matrix},
                    },
                },
            },
        },
        "rank_tol": {"type": ["number", "null"]},
    },
}


def _field_path(err):
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def scenario_from_dict(d):
    try:
        jsonschema.validate(d, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as err:
        if err.validator == "required":
            missing = [k for k in err.validator_value if k not in err.instance]
            where = _field_path(err)
            names = ", ".join(missing)
            raise ScenarioFileError(f"missing required field(s) {names} at {where}") from None
        raise ScenarioFileError(f"schema violation at {_field_path(err)}: {err.message}") from None
    try:
        return Scenario(
            modes=tuple(ModeSpec.from_dict(m) for m in d["modes"]),
            schedule=SwitchingSchedule.from_dict(d["schedule"]),
            excitation=ExcitationConfig.from_dict(d["excitation"]),
            dynamics_f=DynamicsSpec.from_dict(d["dynamics_f"]),
            initial_states={int(k): float(v) for k, v in d["initial_states"].items()},
            seed=int(d["seed"]),
            filter_gain=float(d["filter_gain"]),
            gamma=float(d["gamma"]),
            step=float(d["step"]),
            mode_counts={parse_group_key(k): int(v) for k, v in d["mode_counts"].items()},
            reference=ReferenceSpec.from_dict(d.get("reference")),
            rank_tol=d.get("rank_tol"),
        )
    except (ValueError, KeyError) as exc:
        raise ScenarioFileError(f"invalid scenario: {exc}") from None


def load_scenario(path):
    path = Path(path)
    text = path.read_text()
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioFileError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    try:
        return scenario_from_dict(d)
    except ScenarioFileError as exc:
        raise ScenarioFileError(f"{path}: {exc}") from None


def dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def save_scenario(scenario, path):
    Path(path).write_text(dumps(scenario.to_dict()))


def write_segments(records, path):
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


def read_segments(path):
    path = Path(path)
    if path.is_dir():
        path = path / "segments.jsonl"
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(SegmentRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad segment record: {exc}") from None
    return out


def write_trajectory(chunks, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "node_id", "x", "x_hat", "w"])
        for ch in chunks:
            for j, t in enumerate(ch.times):
                for c, node in enumerate(ch.node_ids):
                    w.writerow([repr(float(t)), node, repr(float(ch.x[j, c])),
                                repr(float(ch.x_hat[j, c])), repr(float(ch.w[j, c]))])


def write_distances(dm, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([""] + list(dm.indices))
        for idx, row in zip(dm.indices, dm.D):
            w.writerow([idx] + [repr(float(v)) for v in row])


def read_distances(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    indices = [int(v) for v in rows[0][1:]]
    D = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return indices, D


def write_dendrogram(merges, path):
    Path(path).write_text(dumps([{"a": a, "b": b, "height": h} for a, b, h in merges]))


def write_labels(labels, groups, path):
    gid_of = {i: gid for gid, info in groups.items() for i in info["indices"]}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_index", "group_id", "label"])
        for idx in sorted(labels):
            w.writerow([idx, gid_of.get(idx, ""), labels[idx]])


def read_labels(path):
    with open(path, newline="") as fh:
        return {int(r["interval_index"]): int(r["label"]) for r in csv.DictReader(fh)}


def write_estimates(estimates, path):
    Path(path).write_text(dumps([e.to_dict() for e in estimates]))


def save_report(report, out_dir):
    """Write labels, distances, dendrograms, estimates and report.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    asg = report.assignment
    written = []
    if asg is not None:
        for gid, dm in asg.distances.items():
            write_distances(dm, out / f"distances_{gid}.csv")
            write_dendrogram(asg.merge_history[gid], out / f"dendrogram_{gid}.json")
            written += [out / f"distances_{gid}.csv", out / f"dendrogram_{gid}.json"]
        write_labels(report.labels, asg.groups, out / "labels.csv")
        written.append(out / "labels.csv")
    write_estimates(report.estimates, out / "estimates.json")
    (out / "report.json").write_text(dumps(report.to_dict()))
    (out / "timing.json").write_text(dumps(report.timing))
    written += [out / "estimates.json", out / "report.json", out / "timing.json"]
    return written
