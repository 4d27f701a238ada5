"""Exhaustive-enumeration oracle on tiny games."""

import numpy as np
import pytest

import stackmfg as s
from conftest import solve_clean_tiny, toy_spec


def make_tiny(spec, **kw):
    return s.TinyGame(spec, **kw)


def test_zero_reward_game_everything_is_smfe():
    spec = toy_spec(horizon=1, seed=0)
    zeroed = s.GameSpec(
        follower_states=spec.follower_states, leader_states=spec.leader_states,
        follower_actions=spec.follower_actions, leader_actions=spec.leader_actions,
        leader_kernel=spec.leader_kernel, follower_kernel=spec.follower_kernel,
        follower_reward=lambda z, xl, xf, al, af: 0.0,
        leader_reward=lambda z, xl, al, gf: 0.0,
        discount=0.9, horizon=1,
        initial_leader_belief=[1.0], initial_mean_field=[0.5, 0.5])
    game = make_tiny(zeroed)
    results = s.enumerate_smfe(game)
    # 2 leader actions x 4 follower maps, all worthless deviations
    assert len(results) == 8
    assert all(r.max_follower_gain <= 1e-12 for r in results)
    assert all(r.leader_gain <= 1e-12 for r in results)


def test_single_stage_stackelberg_by_hand():
    """T=1 infection-style game with price grid {0, 0.1}: at price 0 followers
    are indifferent (value -k z1 = -0.1 for the leader); at price 0.1 they
    strictly wait and the leader banks the margin (value 0.0).  The unique
    SMFE is (price 0.1, wait everywhere), frozen from the 2x4 enumeration."""
    spec = s.build_infection_game(s.InfectionParams(
        subsidy_grid=(0.0, 0.1), c=0.0, horizon=1, initial_infected=0.5))
    game = make_tiny(spec)
    results = s.enumerate_smfe(game)
    assert len(results) == 1
    root = s.oracle.node_key(1, [1.0], [0.5, 0.5])
    assert results[0].profile.leader[root] == (1,)
    assert results[0].profile.follower[root] == (0, 0)
    assert results[0].evaluation.root_leader_value == pytest.approx(0.0, abs=1e-12)


def test_solver_output_in_oracle_set_toy():
    built = solve_clean_tiny(seed=5)
    assert built is not None
    spec, joint, gen, _ = built
    game = make_tiny(spec)
    results = s.enumerate_smfe(game)
    prof = s.profile_from_generator(game, gen)
    assert any(r.profile == prof for r in results)


def test_deviation_gain_dominant_action_gap():
    """Follower forced onto a dominated action: gain equals the 0.5 gap."""

    def follower_reward(z, xl, xf, al, af):
        return 0.5 * af

    def follower_kernel(z, xl, xf, al, af):
        row = np.zeros(2)
        row[xf] = 1.0
        return row

    spec = s.GameSpec(
        follower_states=("a", "b"), leader_states=("L",),
        follower_actions=("0", "1"), leader_actions=("x",),
        leader_kernel=lambda z, al, xl: np.array([1.0]),
        follower_kernel=follower_kernel, follower_reward=follower_reward,
        leader_reward=lambda z, xl, al, gf: 0.0,
        discount=0.9, horizon=1,
        initial_leader_belief=[1.0], initial_mean_field=[0.5, 0.5])
    game = make_tiny(spec)
    root = s.oracle.node_key(1, [1.0], [0.5, 0.5])
    forced = s.OracleProfile(leader={root: (0,)}, follower={root: (0, 0)})
    gain = s.deviation_gain(forced, game, "follower")
    assert gain == pytest.approx(0.5, abs=1e-12)
    gain_at = s.deviation_gain(forced, game, "follower", t=1, info=(root, 1))
    assert gain_at == pytest.approx(0.5, abs=1e-12)


def test_leader_gain_flat_reward_is_zero():
    spec = toy_spec(horizon=1, seed=10)
    flat = s.GameSpec(
        follower_states=spec.follower_states, leader_states=spec.leader_states,
        follower_actions=spec.follower_actions, leader_actions=spec.leader_actions,
        leader_kernel=spec.leader_kernel, follower_kernel=spec.follower_kernel,
        follower_reward=spec.follower_reward,
        leader_reward=lambda z, xl, al, gf: 1.25,
        discount=0.9, horizon=1,
        initial_leader_belief=[1.0], initial_mean_field=[0.5, 0.5])
    game = make_tiny(flat)
    results = s.enumerate_smfe(game)
    assert results
    for r in results:
        assert s.deviation_gain(r.profile, game, "leader") == pytest.approx(0.0,
                                                                            abs=1e-12)


def test_equilibrium_profiles_have_no_gains():
    built = solve_clean_tiny(seed=8)
    assert built is not None
    spec, joint, gen, _ = built
    game = make_tiny(spec)
    for r in s.enumerate_smfe(game):
        assert s.deviation_gain(r.profile, game, "follower") <= 1e-9
        assert s.deviation_gain(r.profile, game, "leader") <= 1e-9


def test_tiny_bounds_enforced():
    with pytest.raises(ValueError):
        make_tiny(toy_spec(horizon=3, seed=0))
    with pytest.raises(ValueError):
        make_tiny(s.build_infection_game())          # infinite horizon
    with pytest.raises(ValueError):
        make_tiny(s.build_infection_game(s.InfectionParams(horizon=2)))  # 21 actions


def test_enumeration_cap():
    spec = toy_spec(horizon=2, seed=1, n_leader_actions=3)
    game = s.TinyGame(spec, max_profiles=10)
    with pytest.raises(s.EnumerationTooLarge):
        s.enumerate_smfe(game)


def test_mean_field_tree_consistency():
    built = solve_clean_tiny(seed=12)
    assert built is not None
    spec, joint, gen, _ = built
    game = make_tiny(spec)
    for r in s.enumerate_smfe(game):
        assert r.evaluation.consistent
        tree = r.evaluation.tree
        for key, node in tree.items():
            if node.children:
                gamma = s.Prescription.pure(node.leader_map, node.follower_map,
                                            spec.n_leader_actions,
                                            spec.n_follower_actions)
                z_next = s.mean_field_step(node.pi, node.z, gamma, spec)
                for ckey in node.children.values():
                    assert np.array_equal(tree[ckey].z, z_next)


def test_oracle_report_shape():
    built = solve_clean_tiny(seed=15)
    assert built is not None
    spec, joint, gen, _ = built
    game = make_tiny(spec)
    report = s.oracle_report(game, generator=gen)
    entry = report["initial_points"][0]
    assert entry["solver_profile_in_smfe_set"] is True
    assert entry["n_smfe"] == len(entry["profiles"])
    assert any(p["matches_solver"] for p in entry["profiles"])
