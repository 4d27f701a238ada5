"""Mean-field and belief transition maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import stackmfg as s
from conftest import random_prescription, random_stochastic_spec


def uniform_prescription(spec):
    return s.Prescription(
        leader=np.full((spec.n_leader_states, spec.n_leader_actions),
                       1.0 / spec.n_leader_actions),
        follower=np.full((spec.n_follower_states, spec.n_follower_actions),
                         1.0 / spec.n_follower_actions))


def test_tech_frozen_step():
    # All prefer product 1 and buy it: switching probability p1=0.1 moves
    # exactly that fraction away, frozen from the closed form.
    spec = s.build_tech_adoption_game(s.TechAdoptionParams(p1=0.1, p2=0.3))
    gamma = s.Prescription(leader=np.array([[1.0] + [0.0] * 20]),
                           follower=np.array([[1.0, 0.0], [0.0, 1.0]]))
    z_next = s.mean_field_step([1.0], [0.0, 1.0], gamma, spec)
    assert z_next[1] == pytest.approx(0.9, abs=1e-15)


def test_infection_frozen_step(infection_spec):
    # Do-nothing population at z=(0.5,0.5), q=0.9: explicit four-term sum.
    # healthy stays w.p. 1-0.45, infected stays put: z'(infected)=0.725.
    gamma = s.Prescription(leader=np.array([[1.0] + [0.0] * 20]),
                           follower=np.array([[1.0, 0.0], [1.0, 0.0]]))
    z_next = s.mean_field_step([1.0], [0.5, 0.5], gamma, infection_spec)
    brute = 0.5 * (0.9 * 0.5) + 0.5 * 1.0
    assert brute == 0.725
    assert z_next[1] == pytest.approx(0.725, abs=1e-15)


def test_single_follower_state_degenerate():
    spec = random_stochastic_spec(0, n_f=1, n_l=1)
    gamma = uniform_prescription(spec)
    z_next = s.mean_field_step([1.0], [1.0], gamma, spec)
    assert z_next == pytest.approx([1.0])


def test_tech_closed_form_thousand_draws():
    """Mean-field step matches the two-state adoption closed form to 1e-12."""
    params = s.TechAdoptionParams(p1=0.15, p2=0.35)
    spec = s.build_tech_adoption_game(params)
    rng = np.random.default_rng(77)
    p1, p2 = params.p1, params.p2
    for _ in range(1000):
        z = rng.dirichlet([1.0, 1.0])
        gf = random_prescription(rng, 2, 2)
        gl = random_prescription(rng, 1, spec.n_leader_actions)
        gamma = s.Prescription(leader=gl, follower=gf)
        z_next = s.mean_field_step([1.0], z, gamma, spec)
        closed = 1.0 - (z[1] * gf[1, 0] * p2 + z[1] * gf[1, 1] * p1
                        + z[0] * gf[0, 0] * (1 - p1) + z[0] * gf[0, 1] * (1 - p2))
        assert abs(z_next[1] - closed) <= 1e-12


def test_belief_degenerate_leader():
    spec = random_stochastic_spec(1, n_l=1)
    out = s.belief_step([1.0], spec.initial_mean_field, np.array([[0.6, 0.4]]), 0, spec)
    assert out == pytest.approx([1.0])


def test_belief_uninformative_action_is_pushforward():
    spec = random_stochastic_spec(2, n_l=2)
    pi = np.array([0.3, 0.7])
    z = spec.initial_mean_field
    gl = np.array([[0.5, 0.5], [0.5, 0.5]])
    out = s.belief_step(pi, z, gl, 0, spec)
    expected = sum(pi[x] * np.asarray(spec.leader_kernel(z, 0, x)) for x in range(2))
    assert out == pytest.approx(expected, abs=1e-14)


def test_belief_bayes_frozen():
    # pi=(0.5,0.5), action taken surely by type 0 and half the time by type 1,
    # identity kernel: posterior (2/3, 1/3) by direct Bayes arithmetic.
    def identity_kernel(z, al, xl):
        row = np.zeros(2)
        row[xl] = 1.0
        return row

    base = random_stochastic_spec(3, n_l=2)
    spec = s.GameSpec(
        follower_states=base.follower_states, leader_states=base.leader_states,
        follower_actions=base.follower_actions, leader_actions=base.leader_actions,
        leader_kernel=identity_kernel, follower_kernel=base.follower_kernel,
        follower_reward=base.follower_reward, leader_reward=base.leader_reward,
        discount=base.discount, horizon=base.horizon,
        initial_leader_belief=base.initial_leader_belief,
        initial_mean_field=base.initial_mean_field)
    gl = np.array([[1.0, 0.0], [0.5, 0.5]])
    out = s.belief_step([0.5, 0.5], spec.initial_mean_field, gl, 0, spec)
    assert out == pytest.approx([2 / 3, 1 / 3], abs=1e-15)


def test_belief_zero_probability_action():
    spec = random_stochastic_spec(4, n_l=2)
    gl = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(s.ZeroProbabilityAction):
        s.belief_step([0.5, 0.5], spec.initial_mean_field, gl, 1, spec)
    out, fell_back = s.belief_step_total([0.5, 0.5], spec.initial_mean_field,
                                         gl, 1, spec)
    assert fell_back
    assert out == pytest.approx([0.5, 0.5])


@given(st.integers(0, 10 ** 6))
@settings(max_examples=80, deadline=None)
def test_outputs_are_distributions(seed):
    rng = np.random.default_rng(seed)
    spec = random_stochastic_spec(seed % 17, n_f=int(rng.integers(1, 4)),
                                  n_l=int(rng.integers(1, 4)))
    pi = rng.dirichlet(np.ones(spec.n_leader_states))
    z = rng.dirichlet(np.ones(spec.n_follower_states))
    gamma = s.Prescription(
        leader=random_prescription(rng, spec.n_leader_states, spec.n_leader_actions),
        follower=random_prescription(rng, spec.n_follower_states,
                                     spec.n_follower_actions))
    z_next = s.mean_field_step(pi, z, gamma, spec)
    assert abs(z_next.sum() - 1.0) <= 1e-12
    assert np.min(z_next) >= 0.0
    al = int(rng.integers(spec.n_leader_actions))
    pi_next, _ = s.belief_step_total(pi, z, gamma.leader, al, spec)
    assert abs(pi_next.sum() - 1.0) <= 1e-12
    assert np.min(pi_next) >= 0.0


@given(st.floats(0.1, 100.0), st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_belief_scale_invariance(scale, seed):
    """Rescaling the observed action's column leaves the posterior unchanged."""
    rng = np.random.default_rng(seed)
    spec = random_stochastic_spec(seed % 13, n_l=3)
    pi = rng.dirichlet(np.ones(3))
    z = rng.dirichlet(np.ones(spec.n_follower_states))
    gl = random_prescription(rng, 3, spec.n_leader_actions) + 1e-3
    base = s.belief_step(pi, z, gl, 0, spec)
    scaled = gl.copy()
    scaled[:, 0] *= scale
    again = s.belief_step(pi, z, scaled, 0, spec)
    assert again == pytest.approx(base, abs=1e-12)


def test_prescription_validation():
    with pytest.raises(ValueError):
        s.Prescription(leader=np.array([[0.5, 0.4]]), follower=np.array([[1.0]]))
    with pytest.raises(ValueError):
        s.Prescription(leader=np.array([[1.0]]), follower=np.array([[-0.1, 1.1]]))
    p = s.Prescription.pure((1,), (0, 1), 2, 2)
    assert p.pure_actions() == ((1,), (0, 1))
