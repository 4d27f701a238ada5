"""Command-line interface: subcommands, exit codes, artifact determinism."""

import json


from stackmfg.cli import main
from test_gamefile import TINY_CONFIG

SMALL = ["--z-res", "10", "--action-res", "5", "--tol", "1e-5",
         "--steps", "25", "--seed", "7"]


def run_cli(args):
    return main(args)


def test_validate_ok(capsys):
    assert run_cli(["validate", "--game", "infection"]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_bad_game_exits_3():
    assert run_cli(["validate", "--game", "nope"]) == 3


def test_validate_catches_bad_discount():
    # infinite horizon with discount 1.0 must be reported, not solved
    assert run_cli(["validate", "--game", "infection",
                    "--param", "delta=1.0"]) == 3


def test_solve_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["solve", "--game", "infection", "--infinite",
                    *SMALL, "--out", str(out)]) == 0
    for name in ("manifest.json", "values.csv", "policy.csv",
                 "trajectory.csv", "diagnostics.jsonl"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["convergence"]["converged"] is True
    assert manifest["horizon"] == "infinite"


def test_finite_horizon_artifact_count(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["solve", "--game", "tech", "--horizon", "4",
                    "--z-res", "8", "--action-res", "5", "--out", str(out)]) == 0
    policy = (out / "policy.csv").read_text().strip().split("\n")[1:]
    stages = {row.split(",")[0] for row in policy}
    assert stages == {"1", "2", "3", "4"}
    traj = (out / "trajectory.csv").read_text().strip().split("\n")[1:]
    assert {row.split(",")[0] for row in traj} == {"1", "2", "3", "4"}


def test_determinism_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["solve", "--game", "infection", "--infinite", *SMALL]
    assert run_cli(args + ["--out", str(a)]) == 0
    assert run_cli(args + ["--out", str(b)]) == 0
    for name in ("manifest.json", "values.csv", "policy.csv",
                 "trajectory.csv", "diagnostics.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_spec_hash_tracks_parameters(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(["solve", "--game", "infection", "--infinite", *SMALL,
             "--out", str(a)])
    run_cli(["solve", "--game", "infection", "--infinite", *SMALL,
             "--param", "k=0.25", "--out", str(b)])
    ha = json.loads((a / "manifest.json").read_text())["spec_hash"]
    hb = json.loads((b / "manifest.json").read_text())["spec_hash"]
    assert ha != hb


def test_oracle_subcommand(tmp_path):
    cfg = tmp_path / "tiny.json"
    cfg.write_text(json.dumps(TINY_CONFIG))
    out = tmp_path / "oracle"
    code = run_cli(["oracle", "--game-file", str(cfg), "--check-solver",
                    "--z-res", "4", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "oracle_report.json").read_text())
    entry = report["initial_points"][0]
    assert entry["n_smfe"] >= 1
    assert entry["solver_profile_in_smfe_set"] is True


def test_export_reruns_trajectory(tmp_path):
    out = tmp_path / "run"
    run_cli(["solve", "--game", "infection", "--infinite", *SMALL,
             "--out", str(out)])
    target = tmp_path / "retraj.csv"
    code = run_cli(["export", "--run-dir", str(out), "--z0", "0.9", "0.1",
                    "--steps", "8", "--out-file", str(target)])
    assert code == 0
    rows = target.read_text().strip().split("\n")
    assert len(rows) == 9
    assert rows[1].split(",")[4] == "0.9"     # z_healthy at t=1


def test_missing_game_is_an_error():
    assert run_cli(["solve"]) == 3


def test_sampled_mode_runs(tmp_path):
    out = tmp_path / "run"
    assert run_cli(["solve", "--game", "infection", "--infinite", *SMALL,
                    "--mode", "sampled", "--out", str(out)]) == 0


def test_nonconvergence_exit_code(tmp_path):
    # the 5-point price grid makes the adoption game's value iteration cycle;
    # the CLI must surface that as its own exit code, not crash
    out = tmp_path / "run"
    assert run_cli(["solve", "--game", "tech", "--infinite", "--z-res", "10",
                    "--action-res", "5", "--tol", "1e-6", "--max-iter", "60",
                    "--out", str(out)]) == 5


def test_threads_env_default(monkeypatch):
    monkeypatch.setenv("STACKMFG_THREADS", "3")
    assert run_cli(["validate", "--game", "infection"]) == 0


def test_threads_flag_same_artifacts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["solve", "--game", "infection", "--infinite", *SMALL]
    assert run_cli(args + ["--threads", "1", "--out", str(a)]) == 0
    assert run_cli(args + ["--threads", "4", "--out", str(b)]) == 0
    for name in ("values.csv", "policy.csv", "trajectory.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
