"""Deterministic artifact writers: CSV tables, trajectories, JSON manifests.

All numbers are printed with 12 significant digits so reruns with identical
configuration diff byte-for-byte and regressions show up as real changes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt(x) -> str:
    """Canonical numeric formatting: 12 significant digits."""
    return f"{float(x):.12g}"


def json_ready(obj):
    """Recursively convert to JSON-serializable values with canonical floats."""
    if isinstance(obj, dict):
        return {str(k): json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(fmt(obj))
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path, payload):
    Path(path).write_text(json.dumps(json_ready(payload), sort_keys=True, indent=1) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def grid_table_csv(path, table, state_labels, coord_labels=None):
    """Flat CSV of a single-simplex table: coordinates, state label, value."""
    grid = table.grid
    if coord_labels is None:
        coord_labels = [f"p{i}" for i in range(grid.dim)]
    header = list(coord_labels) + ["state", "value"]
    rows = []
    for i in range(grid.n_points):
        coords = [fmt(v) for v in grid.points[i]]
        for s in range(table.values.shape[1]):
            rows.append(coords + [str(state_labels[s]), fmt(table.values[i, s])])
    write_csv(path, header, rows)


def joint_table_csv(path, table, pi_labels, z_labels, state_labels, stage=None):
    """Flat CSV of a joint-grid table with optional stage column."""
    joint = table.joint
    header = ([] if stage is None else ["stage"]) \
        + [f"pi_{v}" for v in pi_labels] + [f"z_{v}" for v in z_labels] \
        + ["state", "value"]
    rows = []
    for i in range(joint.pi_grid.n_points):
        for j in range(joint.z_grid.n_points):
            coords = [fmt(v) for v in joint.pi_grid.points[i]] \
                + [fmt(v) for v in joint.z_grid.points[j]]
            for s in range(table.n_states):
                row = coords + [str(state_labels[s]), fmt(table.values[i, j, s])]
                if stage is not None:
                    row = [str(stage)] + row
                rows.append(row)
    write_csv(path, header, rows)


def _joint_tables_rows(tables, spec, joint, stage):
    vf, vl = tables
    rows = []
    for i in range(joint.pi_grid.n_points):
        for j in range(joint.z_grid.n_points):
            coords = [fmt(v) for v in joint.pi_grid.points[i]] \
                + [fmt(v) for v in joint.z_grid.points[j]]
            for s, lab in enumerate(spec.follower_states):
                rows.append([str(stage), "follower", lab] + coords + [fmt(vf.values[i, j, s])])
            for s, lab in enumerate(spec.leader_states):
                rows.append([str(stage), "leader", lab] + coords + [fmt(vl.values[i, j, s])])
    return rows


def values_csv(path, generator, spec):
    """All value tables of a solve, one row per (stage, side, state, point)."""
    joint = generator.joint
    header = ["stage", "side", "state"] \
        + [f"pi_{v}" for v in spec.leader_states] \
        + [f"z_{v}" for v in spec.follower_states] + ["value"]
    rows = []
    if generator.stationary:
        rows.extend(_joint_tables_rows(generator.tables[0], spec, joint, "stationary"))
    else:
        for k, tables in enumerate(generator.tables):
            rows.extend(_joint_tables_rows(tables, spec, joint, k + 1))
    write_csv(path, header, rows)


def policy_csv(path, generator, spec):
    """Equilibrium prescriptions per (stage, grid point)."""
    joint = generator.joint
    header = ["stage"] \
        + [f"pi_{v}" for v in spec.leader_states] \
        + [f"z_{v}" for v in spec.follower_states] \
        + [f"gl_{x}_{a}" for x in spec.leader_states for a in spec.leader_actions] \
        + [f"gf_{x}_{a}" for x in spec.follower_states for a in spec.follower_actions]
    rows = []
    stages = ["stationary"] if generator.stationary else \
        [str(t + 1) for t in range(len(generator.stages))]
    for stage_label, policy in zip(stages, generator.stages):
        for flat in range(joint.n_points):
            sol = policy.solution(flat)
            pi, z = joint.point(flat)
            row = [stage_label] + [fmt(v) for v in pi] + [fmt(v) for v in z]
            if sol is None:
                row += ["nan"] * (spec.n_leader_states * spec.n_leader_actions
                                  + spec.n_follower_states * spec.n_follower_actions)
            else:
                row += [fmt(v) for v in sol.prescription.leader.ravel()]
                row += [fmt(v) for v in sol.prescription.follower.ravel()]
            rows.append(row)
    write_csv(path, header, rows)


def trajectory_csv(path, trajectory, spec):
    """One row per (step, branch): public state, prescriptions, rewards."""
    header = ["t", "branch", "weight"] \
        + [f"pi_{v}" for v in spec.leader_states] \
        + [f"z_{v}" for v in spec.follower_states] \
        + [f"al_{a}" for a in spec.leader_actions] \
        + [f"gl_{x}_{a}" for x in spec.leader_states for a in spec.leader_actions] \
        + [f"gf_{x}_{a}" for x in spec.follower_states for a in spec.follower_actions] \
        + ["leader_reward", "follower_reward"]
    rows = []
    for step in trajectory.steps:
        for b, (branch, gamma, marg) in enumerate(
                zip(step.branches, step.prescriptions, step.action_marginals)):
            rows.append(
                [str(step.t), str(b), fmt(branch.weight)]
                + [fmt(v) for v in branch.pi] + [fmt(v) for v in branch.z]
                + [fmt(v) for v in marg]
                + [fmt(v) for v in gamma.leader.ravel()]
                + [fmt(v) for v in gamma.follower.ravel()]
                + [fmt(step.leader_reward), fmt(step.follower_reward)])
    write_csv(path, header, rows)


def diagnostics_jsonl(path, generator):
    """Per-grid-point stage diagnostics as line-delimited JSON."""
    lines = []
    stages = ["stationary"] if generator.stationary else \
        [str(t + 1) for t in range(len(generator.stages))]
    for stage_label, policy in zip(stages, generator.stages):
        for flat in range(generator.joint.n_points):
            sol = policy.solution(flat)
            pi, z = generator.joint.point(flat)
            record = {"stage": stage_label,
                      "pi": [float(fmt(v)) for v in pi],
                      "z": [float(fmt(v)) for v in z]}
            if sol is None:
                record["unsolved"] = True
            else:
                record.update(sol.diagnostics.to_dict())
            lines.append(json.dumps(json_ready(record), sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")
