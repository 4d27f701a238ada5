"""Command-line interface: solve, validate, oracle, export.

Exit codes: 0 success, 2 usage (argparse), 3 validation failure,
4 no stage equilibrium, 5 stationary non-convergence, 6 oracle enumeration
too large.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import export
from .dynamics import Prescription
from .errors import EnumerationTooLarge, NoEquilibriumError, NonConvergenceError
from .game import spec_hash, validate
from .gamefile import load_game_dict, load_game_file
from .games import BUILTIN_GAMES
from .grids import JointGrid, JointTable, build_grid
from .oracle import TinyGame, oracle_report
from .solver import (EquilibriumGenerator, StagePolicy, backward_pass,
                     forward_pass, solve_stationary)
from .stage import SolverConfig, StageDiagnostics, StageSolution

EXIT_OK = 0
EXIT_VALIDATION = 3
EXIT_NO_EQUILIBRIUM = 4
EXIT_NONCONVERGENCE = 5
EXIT_ENUMERATION = 6


@dataclass
class RunConfig:
    """Everything one solve needs; mirrors the CLI flags."""

    game: Optional[str] = None
    game_file: Optional[str] = None
    params: dict = field(default_factory=dict)
    horizon: Optional[int] = None
    infinite: bool = False
    z_resolution: Optional[int] = None
    pi_resolution: int = 10
    action_resolution: Optional[int] = None
    tol: float = 1e-6
    max_iter: int = 2000
    br_tol: float = 1e-9
    bayes_eps: float = 1e-12
    steps: Optional[int] = None
    mode: str = "expected"
    seed: int = 0
    offgrid: str = "resolve"
    out: Optional[str] = None
    threads: int = 1
    z0: Optional[list] = None
    pi0: Optional[list] = None

    def solver_config(self) -> SolverConfig:
        return SolverConfig(br_tol=self.br_tol, bayes_eps=self.bayes_eps,
                            threads=self.threads)


def _err(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _parse_param(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"--param expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def build_spec(config: RunConfig):
    """Construct the GameSpec selected by a run configuration."""
    if config.game_file:
        spec = load_game_file(config.game_file)
        if config.horizon is not None and spec.horizon != config.horizon:
            import dataclasses
            spec = dataclasses.replace(spec, horizon=config.horizon)
    elif config.game:
        if config.game not in BUILTIN_GAMES:
            raise ValueError(f"unknown game {config.game!r}; "
                             f"available: {sorted(BUILTIN_GAMES)}")
        params = dict(config.params)
        if config.action_resolution is not None:
            key = "subsidy_points" if config.game == "infection" else "price_points"
            params.setdefault(key, config.action_resolution)
        if config.horizon is not None:
            params.setdefault("horizon", config.horizon)
        cfg = {"builtin": config.game, "params": params}
        spec = load_game_dict(cfg)
    else:
        raise ValueError("select a game with --game or --game-file")
    if config.infinite and spec.horizon is not None:
        raise ValueError("--infinite conflicts with a finite-horizon game definition")
    if not config.infinite and config.horizon is None and spec.horizon is None:
        config.infinite = True      # stationary by default for infinite specs
    return spec


def _grids(spec, config: RunConfig) -> JointGrid:
    z_res = config.z_resolution
    if z_res is None:
        z_res = 50 if spec.n_follower_states == 2 else 10
    pi_res = config.pi_resolution if spec.n_leader_states > 1 else 1
    return JointGrid(pi_grid=build_grid(spec.n_leader_states, pi_res),
                     z_grid=build_grid(spec.n_follower_states, z_res))


def run(config: RunConfig) -> int:
    """Solve a game, roll the equilibrium forward, write all artifacts."""
    try:
        spec = build_spec(config)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION

    joint = _grids(spec, config)
    report = validate(spec, grid_resolution=min(joint.z_grid.resolution, 25))
    if not report.ok:
        _err("game definition failed validation:")
        print(str(report), file=sys.stderr)
        return EXIT_VALIDATION

    solver_config = config.solver_config()
    convergence = None
    try:
        if spec.infinite_horizon:
            generator, _, convergence = solve_stationary(
                spec, joint, tol=config.tol, max_iter=config.max_iter,
                config=solver_config)
        else:
            generator, _ = backward_pass(spec, joint, config=solver_config)
    except NoEquilibriumError as exc:
        _err(f"no stage equilibrium: {exc} at t={exc.t}, pi={exc.pi}, z={exc.z}")
        return EXIT_NO_EQUILIBRIUM
    except NonConvergenceError as exc:
        _err(f"{exc}")
        return EXIT_NONCONVERGENCE

    pi0 = np.asarray(config.pi0, dtype=np.float64) if config.pi0 else spec.initial_leader_belief
    z0 = np.asarray(config.z0, dtype=np.float64) if config.z0 else spec.initial_mean_field
    steps = config.steps
    if steps is None:
        steps = 200 if spec.infinite_horizon else spec.horizon
    if not spec.infinite_horizon:
        steps = min(steps, spec.horizon)
    trajectory = forward_pass(spec, generator, pi0, z0, steps=steps,
                              mode=config.mode, seed=config.seed,
                              offgrid=config.offgrid, config=solver_config)

    digest = spec_hash(spec)
    outdir = Path(config.out) if config.out else Path("out") / digest
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        _err(f"cannot create output directory {outdir}: {exc}")
        return EXIT_VALIDATION

    manifest = {
        "game": {"name": spec.name,
                 "config": spec.metadata.get("config",
                                             {"builtin": spec.name,
                                              "params": spec.metadata.get("params", {})})},
        "spec_hash": digest,
        "grids": {"z_resolution": joint.z_grid.resolution,
                  "pi_resolution": joint.pi_grid.resolution},
        "tolerances": {"value_iteration": config.tol, "br_tol": config.br_tol,
                       "bayes_eps": config.bayes_eps},
        "horizon": "infinite" if spec.infinite_horizon else spec.horizon,
        "seed": config.seed,
        "mode": config.mode,
        "offgrid": config.offgrid,
        "steps": steps,
        "convergence": convergence.to_dict() if convergence else None,
        "trajectory": {
            "leader_discounted": trajectory.leader_discounted,
            "follower_discounted": list(trajectory.follower_discounted),
            "final_mean_field": list(trajectory.mean_field_path()[-1]),
            "lost_weight": trajectory.lost_weight,
            "offgrid_lookups": trajectory.offgrid_lookups,
        },
    }
    export.write_json(outdir / "manifest.json", manifest)
    export.values_csv(outdir / "values.csv", generator, spec)
    export.policy_csv(outdir / "policy.csv", generator, spec)
    export.trajectory_csv(outdir / "trajectory.csv", trajectory, spec)
    export.diagnostics_jsonl(outdir / "diagnostics.jsonl", generator)

    final_z = trajectory.mean_field_path()[-1]
    print(f"spec hash: {digest}")
    if convergence is not None:
        print(f"stationary solve converged in {convergence.iterations} sweeps "
              f"(last delta {export.fmt(convergence.deltas[-1])})")
    print(f"forward steps: {steps}  final mean field: "
          + "[" + ", ".join(export.fmt(v) for v in final_z) + "]")
    print(f"leader discounted reward: {export.fmt(trajectory.leader_discounted)}")
    print(f"artifacts: {outdir}")
    return EXIT_OK


def cmd_validate(config: RunConfig) -> int:
    try:
        spec = build_spec(config)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    report = validate(spec)
    print(str(report))
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_oracle(config: RunConfig, check_solver: bool) -> int:
    try:
        spec = build_spec(config)
        initial_points = None
        meta_points = spec.metadata.get("initial_points")
        if meta_points:
            initial_points = [(np.asarray(p["pi"], dtype=np.float64),
                               np.asarray(p["z"], dtype=np.float64))
                              for p in meta_points]
        game = TinyGame(spec, initial_points=initial_points or [])
    except (ValueError, FileNotFoundError, KeyError) as exc:
        _err(str(exc))
        return EXIT_VALIDATION

    generator = None
    if check_solver:
        joint = _grids(spec, config)
        try:
            generator, _ = backward_pass(spec, joint, config=config.solver_config())
        except NoEquilibriumError as exc:
            _err(f"solver failed: {exc}")
            return EXIT_NO_EQUILIBRIUM
    try:
        report = oracle_report(game, generator=generator)
    except EnumerationTooLarge as exc:
        _err(str(exc))
        return EXIT_ENUMERATION

    if config.out:
        outdir = Path(config.out)
        outdir.mkdir(parents=True, exist_ok=True)
        export.write_json(outdir / "oracle_report.json", report)
        print(f"oracle report: {outdir / 'oracle_report.json'}")
    else:
        print(json.dumps(export.json_ready(report), sort_keys=True, indent=1))
    for entry in report["initial_points"]:
        line = f"initial point {entry['initial_mean_field']}: {entry['n_smfe']} SMFE"
        if "solver_profile_in_smfe_set" in entry:
            line += f"; solver profile in set: {entry['solver_profile_in_smfe_set']}"
        print(line)
    return EXIT_OK


def _load_run(run_dir: Path):
    """Rebuild (spec, generator) from a previous solve's artifacts."""
    manifest = json.loads((run_dir / "manifest.json").read_text())
    spec = load_game_dict(manifest["game"]["config"])
    joint = JointGrid(
        pi_grid=build_grid(spec.n_leader_states, manifest["grids"]["pi_resolution"]),
        z_grid=build_grid(spec.n_follower_states, manifest["grids"]["z_resolution"]))
    stationary = manifest["horizon"] == "infinite"

    policy_rows = (run_dir / "policy.csv").read_text().strip().split("\n")[1:]
    n_l, n_al = spec.n_leader_states, spec.n_leader_actions
    n_f, n_af = spec.n_follower_states, spec.n_follower_actions
    by_stage = {}
    for row in policy_rows:
        cells = row.split(",")
        stage = cells[0]
        vals = [float(v) for v in cells[1 + n_l + n_f:]]
        gl = np.asarray(vals[:n_l * n_al]).reshape(n_l, n_al)
        gf = np.asarray(vals[n_l * n_al:]).reshape(n_f, n_af)
        gl = gl / gl.sum(axis=1, keepdims=True)
        gf = gf / gf.sum(axis=1, keepdims=True)
        by_stage.setdefault(stage, []).append(Prescription(leader=gl, follower=gf))

    value_rows = (run_dir / "values.csv").read_text().strip().split("\n")[1:]
    tables = {}
    for row in value_rows:
        cells = row.split(",")
        stage, side, state = cells[0], cells[1], cells[2]
        value = float(cells[-1])
        tables.setdefault(stage, {"follower": [], "leader": []})[side].append((state, value))

    stages = []
    stage_keys = sorted(by_stage) if stationary else \
        [str(t + 1) for t in range(len(by_stage))]
    table_list = []
    for stage in stage_keys:
        vf = np.zeros((joint.pi_grid.n_points, joint.z_grid.n_points, n_f))
        vl = np.zeros((joint.pi_grid.n_points, joint.z_grid.n_points, n_l))
        f_entries = tables[stage]["follower"]
        l_entries = tables[stage]["leader"]
        pos = 0
        for i in range(joint.pi_grid.n_points):
            for j in range(joint.z_grid.n_points):
                for s in range(n_f):
                    vf[i, j, s] = f_entries[pos * n_f + s][1]
                for s in range(n_l):
                    vl[i, j, s] = l_entries[pos * n_l + s][1]
                pos += 1
        solutions = []
        for flat, prescription in enumerate(by_stage[stage]):
            i, j = joint.unravel(flat)
            solutions.append(StageSolution(
                prescription=prescription,
                follower_values=vf[i, j, :].copy(),
                leader_values=vl[i, j, :].copy(),
                diagnostics=StageDiagnostics()))
        stages.append(StagePolicy(joint, solutions))
        table_list.append((JointTable(joint, vf), JointTable(joint, vl)))
    if not stationary:
        # continuation_for(t) expects tables[t] = stage-(t+1) tables; append zeros.
        table_list.append((JointTable.zeros(joint, n_f), JointTable.zeros(joint, n_l)))
    return spec, EquilibriumGenerator(joint=joint, stages=stages,
                                      stationary=stationary, tables=table_list)


def cmd_export(run_dir: str, config: RunConfig, out_file: Optional[str]) -> int:
    path = Path(run_dir)
    if not (path / "manifest.json").exists():
        _err(f"no manifest.json under {run_dir}")
        return EXIT_VALIDATION
    spec, generator = _load_run(path)
    pi0 = np.asarray(config.pi0, dtype=np.float64) if config.pi0 else spec.initial_leader_belief
    z0 = np.asarray(config.z0, dtype=np.float64) if config.z0 else spec.initial_mean_field
    steps = config.steps
    if steps is None:
        steps = 200 if generator.stationary else generator.n_stages
    trajectory = forward_pass(spec, generator, pi0, z0, steps=steps,
                              mode=config.mode, seed=config.seed,
                              offgrid=config.offgrid, config=config.solver_config())
    target = Path(out_file) if out_file else path / "trajectory_export.csv"
    export.trajectory_csv(target, trajectory, spec)
    print(f"trajectory: {target}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--game", help="built-in game name (infection, tech)")
    p.add_argument("--game-file", help="path to a JSON game definition")
    p.add_argument("--param", action="append", type=_parse_param, default=[],
                   metavar="KEY=VALUE", help="built-in game parameter override")
    p.add_argument("--horizon", type=int, help="finite horizon length")
    p.add_argument("--infinite", action="store_true",
                   help="stationary discounted solve")
    p.add_argument("--z-res", type=int, dest="z_resolution",
                   help="mean-field grid resolution (default 50 for 2 types)")
    p.add_argument("--pi-res", type=int, dest="pi_resolution", default=10,
                   help="belief grid resolution (default 10)")
    p.add_argument("--action-res", type=int, dest="action_resolution",
                   help="leader action grid density for built-in games")
    p.add_argument("--tol", type=float, default=1e-6,
                   help="value-iteration stopping tolerance")
    p.add_argument("--max-iter", type=int, default=2000)
    p.add_argument("--br-tol", type=float, default=1e-9,
                   help="best-response fixed-point tolerance")
    p.add_argument("--bayes-eps", type=float, default=1e-12)
    p.add_argument("--steps", type=int, help="forward steps (default 200 stationary)")
    p.add_argument("--mode", choices=["expected", "sampled"], default="expected")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--offgrid", choices=["resolve", "nearest"], default="resolve",
                   help="prescription lookup at off-grid public states")
    p.add_argument("--out", help="output directory (default out/<spec-hash>)")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("STACKMFG_THREADS", "1")))
    p.add_argument("--z0", type=float, nargs="+", help="initial mean field override")
    p.add_argument("--pi0", type=float, nargs="+", help="initial belief override")


def _config_from(args) -> RunConfig:
    return RunConfig(
        game=args.game, game_file=args.game_file, params=dict(args.param),
        horizon=args.horizon, infinite=args.infinite,
        z_resolution=args.z_resolution, pi_resolution=args.pi_resolution,
        action_resolution=args.action_resolution, tol=args.tol,
        max_iter=args.max_iter, br_tol=args.br_tol, bayes_eps=args.bayes_eps,
        steps=args.steps, mode=args.mode, seed=args.seed, offgrid=args.offgrid,
        out=args.out, threads=args.threads, z0=args.z0, pi0=args.pi0)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stackmfg",
        description="Equilibrium solver for leader/followers mean-field games")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a game and export artifacts")
    _add_common(p_solve)

    p_val = sub.add_parser("validate", help="check a game definition")
    _add_common(p_val)

    p_oracle = sub.add_parser("oracle", help="brute-force a tiny game")
    _add_common(p_oracle)
    p_oracle.add_argument("--check-solver", action="store_true",
                          help="also run the solver and report membership")

    p_export = sub.add_parser("export", help="re-export a trajectory from a run")
    _add_common(p_export)
    p_export.add_argument("--run-dir", required=True)
    p_export.add_argument("--out-file")

    args = parser.parse_args(argv)
    config = _config_from(args)
    if args.command == "solve":
        return run(config)
    if args.command == "validate":
        return cmd_validate(config)
    if args.command == "oracle":
        return cmd_oracle(config, args.check_solver)
    if args.command == "export":
        return cmd_export(args.run_dir, config, args.out_file)
    parser.error(f"unknown command {args.command}")
    return 2


if __name__ == "__main__":
    sys.exit(main())
