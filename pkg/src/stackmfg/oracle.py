"""Brute-force ground truth for tiny instances.

Enumerates every pure Markov strategy profile on the public-history tree of
a short game, computes the induced mean-field trajectory, and keeps exactly
the profiles where (a) each follower type is sequentially rational at every
tree node against the population's own play, (b) the mean field reproduces
itself under the profile, and (c) no alternative leader plan, with followers
re-equilibrating, earns the leader more.  Follower optimality is verified by
dynamic programming over tree nodes, so deviations conditioning on the full
public history are covered, not just Markov ones.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Prescription, belief_step_total, mean_field_step
from .errors import EnumerationTooLarge, NoEquilibriumError
from .game import GameSpec

_KEY_DECIMALS = 12


def _round_key(vec) -> tuple:
    return tuple(float(v) for v in np.round(np.asarray(vec, dtype=np.float64),
                                            _KEY_DECIMALS))


def node_key(t: int, pi, z) -> tuple:
    return (t, _round_key(pi), _round_key(z))


@dataclass
class TinyGame:
    """A game small enough for exhaustive profile enumeration.

    Bounds: finite horizon <= 2, at most 2 types per side, at most 2 follower
    actions and 3 leader actions.  ``initial_points`` lists the (belief,
    mean field) starting points to analyze; defaults to the spec's own.
    """

    spec: GameSpec
    initial_points: list = field(default_factory=list)
    max_profiles: int = 10_000_000

    def __post_init__(self):
        s = self.spec
        if s.horizon is None or s.horizon > 2:
            raise ValueError("tiny games need a finite horizon <= 2")
        if s.n_follower_states > 2 or s.n_leader_states > 2:
            raise ValueError("tiny games allow at most 2 private states per side")
        if s.n_follower_actions > 2 or s.n_leader_actions > 3:
            raise ValueError("tiny games allow |A^f| <= 2 and |A^l| <= 3")
        if not self.initial_points:
            self.initial_points = [(s.initial_leader_belief.copy(),
                                    s.initial_mean_field.copy())]
        self.initial_points = [
            (np.asarray(pi, dtype=np.float64), np.asarray(z, dtype=np.float64))
            for pi, z in self.initial_points]


@dataclass(frozen=True)
class OracleProfile:
    """Pure Markov profile: per-node action tuples for both sides."""

    leader: dict
    follower: dict

    def key(self):
        return (tuple(sorted(self.leader.items())),
                tuple(sorted(self.follower.items())))

    def __eq__(self, other):
        return isinstance(other, OracleProfile) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


@dataclass
class _Node:
    t: int
    pi: np.ndarray
    z: np.ndarray
    leader_map: tuple
    follower_map: tuple
    children: dict = field(default_factory=dict)   # leader action -> child key
    weights: dict = field(default_factory=dict)    # leader action -> public prob


def _pure_prescription(spec, leader_map, follower_map) -> Prescription:
    return Prescription.pure(leader_map, follower_map,
                             spec.n_leader_actions, spec.n_follower_actions)


def _node_children(spec, pi, z, leader_map, follower_map):
    """(next mean field, {leader action: (weight, next belief)})."""
    gamma = _pure_prescription(spec, leader_map, follower_map)
    z_next = mean_field_step(pi, z, gamma, spec)
    out = {}
    for al in sorted(set(leader_map)):
        w = float(sum(pi[xl] for xl, a in enumerate(leader_map) if a == al))
        pi_next, _ = belief_step_total(pi, z, gamma.leader, al, spec)
        out[al] = (w, pi_next)
    return z_next, out


def enumerate_profiles(game: TinyGame, initial_index: int = 0):
    """All pure Markov profiles on the reachable public tree."""
    spec = game.spec
    T = spec.horizon
    pi1, z1 = game.initial_points[initial_index]
    leader_maps = list(itertools.product(range(spec.n_leader_actions),
                                         repeat=spec.n_leader_states))
    follower_maps = list(itertools.product(range(spec.n_follower_actions),
                                           repeat=spec.n_follower_states))
    joint = list(itertools.product(leader_maps, follower_maps))

    profiles = []
    count = 0

    def recurse(t, states, leader_assign, follower_assign):
        nonlocal count
        if t > T:
            count += 1
            if count > game.max_profiles:
                raise EnumerationTooLarge(
                    f"profile enumeration exceeded cap {game.max_profiles}")
            profiles.append(OracleProfile(leader=dict(leader_assign),
                                          follower=dict(follower_assign)))
            return
        keys = sorted(states)
        for combo in itertools.product(joint, repeat=len(keys)):
            for key, (lm, fm) in zip(keys, combo):
                leader_assign[key] = lm
                follower_assign[key] = fm
            next_states = {}
            if t < T:
                for key in keys:
                    pi, z = states[key]
                    lm, fm = leader_assign[key], follower_assign[key]
                    z_next, children = _node_children(spec, pi, z, lm, fm)
                    for al, (w, pi_next) in children.items():
                        next_states[node_key(t + 1, pi_next, z_next)] = (pi_next, z_next)
            recurse(t + 1, next_states, leader_assign, follower_assign)
            for key in keys:
                del leader_assign[key]
                del follower_assign[key]

    recurse(1, {node_key(1, pi1, z1): (pi1, z1)}, {}, {})
    return profiles


def build_tree(game: TinyGame, profile: OracleProfile, initial_index: int = 0):
    """Expand a profile into its public tree (nodes keyed by (t, belief, mean field))."""
    spec = game.spec
    T = spec.horizon
    pi1, z1 = game.initial_points[initial_index]
    nodes = {}

    def visit(t, pi, z):
        key = node_key(t, pi, z)
        if key in nodes:
            return key
        lm = profile.leader[key]
        fm = profile.follower[key]
        node = _Node(t=t, pi=np.asarray(pi), z=np.asarray(z),
                     leader_map=lm, follower_map=fm)
        nodes[key] = node
        if t < T:
            z_next, children = _node_children(spec, pi, z, lm, fm)
            for al, (w, pi_next) in children.items():
                node.children[al] = visit(t + 1, pi_next, z_next)
                node.weights[al] = w
        return key

    visit(1, pi1, z1)
    return nodes


@dataclass
class ProfileEvaluation:
    """Values and optimality checks of one profile on its own tree."""

    profile: OracleProfile
    tree: dict
    follower_values: dict           # key -> (n_f,)
    follower_best: dict             # key -> (n_f,) DP over all deviations
    leader_values: dict             # key -> (n_l,)
    root_key: tuple
    root_leader_value: float
    max_follower_gap: float
    consistent: bool

    def follower_ok(self, tol: float) -> bool:
        return self.max_follower_gap <= tol


def evaluate_profile(game: TinyGame, profile: OracleProfile,
                     initial_index: int = 0) -> ProfileEvaluation:
    spec = game.spec
    delta = spec.discount
    pi1, z1 = game.initial_points[initial_index]
    tree = build_tree(game, profile, initial_index)
    by_depth = sorted(tree.items(), key=lambda kv: -kv[1].t)

    vals, best, lead = {}, {}, {}
    for key, node in by_depth:
        pi, z = node.pi, node.z
        lm, fm = node.leader_map, node.follower_map
        n_f, n_l = spec.n_follower_states, spec.n_leader_states
        n_af = spec.n_follower_actions
        zero = np.zeros(n_f)

        def action_value(xf, af, continuation):
            total = 0.0
            for xl in range(n_l):
                if pi[xl] == 0.0:
                    continue
                al = lm[xl]
                r = float(spec.follower_reward(z, xl, xf, al, af))
                child = continuation[node.children[al]] if node.children else zero
                q = np.asarray(spec.follower_kernel(z, xl, xf, al, af))
                total += pi[xl] * (r + delta * float(q @ child))
            return total

        # Profile value plays the assigned action against the profile's own
        # continuation; the best-response DP maxes over actions against the
        # best continuation, covering history-dependent deviations.
        vals[key] = np.array([action_value(xf, fm[xf], vals) for xf in range(n_f)])
        best[key] = np.array([max(action_value(xf, af, best) for af in range(n_af))
                              for xf in range(n_f)])

        gamma_f = _pure_prescription(spec, lm, fm).follower
        vl = np.zeros(n_l)
        for xl in range(n_l):
            al = lm[xl]
            r = float(spec.leader_reward(z, xl, al, gamma_f))
            if node.children:
                child = lead[node.children[al]]
                q = np.asarray(spec.leader_kernel(z, al, xl))
                vl[xl] = r + delta * float(q @ child)
            else:
                vl[xl] = r
        lead[key] = vl

    root = node_key(1, pi1, z1)
    gap = max(float(np.max(best[k] - vals[k])) for k in tree)
    consistent = _check_consistency(spec, tree)
    return ProfileEvaluation(
        profile=profile, tree=tree, follower_values=vals, follower_best=best,
        leader_values=lead, root_key=root,
        root_leader_value=float(pi1 @ lead[root]),
        max_follower_gap=gap, consistent=consistent)


def _check_consistency(spec, tree) -> bool:
    """Stored child mean fields must be reproduced bitwise by the update map."""
    for key, node in tree.items():
        if not node.children:
            continue
        gamma = _pure_prescription(spec, node.leader_map, node.follower_map)
        z_next = mean_field_step(node.pi, node.z, gamma, spec)
        for child_key in node.children.values():
            if not np.array_equal(tree[child_key].z, z_next):
                return False
    return True


class _ExactStageRecursion:
    """Exact stage equilibria at arbitrary public states, no grids.

    Works backward from the terminal time: at each queried (t, belief, mean
    field) it enumerates every pure prescription pair, keeps the pairs whose
    follower side is a self-consistent best response, and values them with
    the leader-optimistic continuation at the exact child states.  Used to
    price leader deviations: the leader must be unimprovable at every time,
    so candidate profiles are compared against these stage optima node by
    node.
    """

    def __init__(self, game: TinyGame, tol: float = 1e-9):
        self.spec = game.spec
        self.horizon = game.spec.horizon
        self.tol = tol
        self._stage = {}
        self._values = {}

    def stage_candidates(self, t: int, pi, z):
        """(leader map, follower map, ex-ante leader value, V^l rows) per
        stage-valid pair at this public state."""
        spec = self.spec
        key = node_key(t, pi, z)
        if key in self._stage:
            return self._stage[key]
        pi = np.asarray(pi, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        delta = spec.discount
        n_f, n_l = spec.n_follower_states, spec.n_leader_states
        zero_f, zero_l = np.zeros(n_f), np.zeros(n_l)
        out = []
        for lm in itertools.product(range(spec.n_leader_actions), repeat=n_l):
            for fm in itertools.product(range(spec.n_follower_actions), repeat=n_f):
                z_next, children = _node_children(spec, pi, z, lm, fm)
                cont = {}
                for al, (w, pi_next) in children.items():
                    if t < self.horizon:
                        cont[al] = self.values(t + 1, pi_next, z_next)
                    else:
                        cont[al] = (zero_f, zero_l)
                ok = True
                for xf in range(n_f):
                    vals = []
                    for af in range(spec.n_follower_actions):
                        total = 0.0
                        for xl in range(n_l):
                            if pi[xl] == 0.0:
                                continue
                            al = lm[xl]
                            r = float(spec.follower_reward(z, xl, xf, al, af))
                            q = np.asarray(spec.follower_kernel(z, xl, xf, al, af))
                            total += pi[xl] * (r + delta * float(q @ cont[al][0]))
                        vals.append(total)
                    if vals[fm[xf]] < max(vals) - self.tol:
                        ok = False
                        break
                if not ok:
                    continue
                gamma_f = _pure_prescription(spec, lm, fm).follower
                vl = np.zeros(n_l)
                for xl in range(n_l):
                    al = lm[xl]
                    r = float(spec.leader_reward(z, xl, al, gamma_f))
                    q = np.asarray(spec.leader_kernel(z, al, xl))
                    vl[xl] = r + delta * float(q @ cont[al][1])
                out.append((lm, fm, float(pi @ vl), vl))
        self._stage[key] = out
        return out

    def values(self, t: int, pi, z):
        """(V^f, V^l) rows of the leader-optimistic stage selection."""
        key = node_key(t, pi, z)
        if key in self._values:
            return self._values[key]
        cands = self.stage_candidates(t, pi, z)
        if not cands:
            raise NoEquilibriumError(
                "no pure stage equilibrium while pricing leader deviations; "
                "tiny game not oracle-compatible", t=t, pi=pi, z=z)
        best = max(c[2] for c in cands)
        lm, fm, _, vl = next(c for c in cands if c[2] == best)
        # follower values of the selected pair, with its own continuation
        spec = self.spec
        pi = np.asarray(pi, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        z_next, children = _node_children(spec, pi, z, lm, fm)
        vf = np.zeros(spec.n_follower_states)
        for xf in range(spec.n_follower_states):
            total = 0.0
            for xl in range(spec.n_leader_states):
                if pi[xl] == 0.0:
                    continue
                al = lm[xl]
                if t < self.horizon:
                    cont_f = self.values(t + 1, children[al][1], z_next)[0]
                else:
                    cont_f = np.zeros(spec.n_follower_states)
                r = float(spec.follower_reward(z, xl, xf, al, fm[xf]))
                q = np.asarray(spec.follower_kernel(z, xl, xf, al, fm[xf]))
                total += pi[xl] * (r + spec.discount * float(q @ cont_f))
            vf[xf] = total
        self._values[key] = (vf, vl)
        return self._values[key]

    def best_value(self, t: int, pi, z) -> float:
        cands = self.stage_candidates(t, pi, z)
        return max(c[2] for c in cands) if cands else -np.inf


def _leader_node_gaps(game: TinyGame, ev: ProfileEvaluation,
                      recursion: _ExactStageRecursion):
    """Per-node shortfall of the profile's leader value vs the stage optimum."""
    gaps = {}
    for key, node in ev.tree.items():
        own = float(np.asarray(node.pi) @ ev.leader_values[key])
        gaps[key] = recursion.best_value(node.t, node.pi, node.z) - own
    return gaps


@dataclass
class SMFEResult:
    profile: OracleProfile
    evaluation: ProfileEvaluation
    leader_gain: float
    max_follower_gain: float

    @property
    def mean_field_tree(self):
        return {key: node.z.copy() for key, node in self.evaluation.tree.items()}


def enumerate_smfe(game: TinyGame, initial_index: int = 0,
                   tol: float = 1e-9):
    """All equilibrium profiles of a tiny game, by exhaustive search.

    A profile qualifies when followers are sequentially rational at every
    tree node, the mean field reproduces itself, and the leader's play is
    unimprovable at every node: no alternative prescription pair (followers
    re-best-responding, leader-optimistic continuation) earns more than
    ``tol`` extra at any reached public state.  Requiring optimality at
    every time excludes time-inconsistent commitment plans that a stagewise
    recursion cannot generate.
    """
    recursion = _ExactStageRecursion(game, tol)
    out = []
    for profile in enumerate_profiles(game, initial_index):
        ev = evaluate_profile(game, profile, initial_index)
        if not (ev.consistent and ev.follower_ok(tol)):
            continue
        gaps = _leader_node_gaps(game, ev, recursion)
        worst = max(gaps.values())
        if worst <= tol:
            out.append(SMFEResult(
                profile=ev.profile, evaluation=ev,
                leader_gain=max(worst, 0.0),
                max_follower_gain=ev.max_follower_gap))
    return out


def deviation_gain(profile: OracleProfile, game: TinyGame, player: str,
                   t: Optional[int] = None, info=None,
                   initial_index: int = 0) -> float:
    """Best improvement available by deviating from ``profile``.

    For a follower, the gain is over single-point deviations at one tree
    node and private type (all of them when ``info`` is None), keeping the
    continuation fixed.  For the leader, the gain at a node is the exact
    stage optimum (followers re-best-responding, optimistic continuation)
    minus the profile's own continuation value there; ``info`` may name a
    tree node key to restrict the check.
    """
    ev = evaluate_profile(game, profile, initial_index)
    if player == "follower":
        gaps = []
        for key, node in ev.tree.items():
            if t is not None and node.t != t:
                continue
            for xf in range(game.spec.n_follower_states):
                if info is not None and (key, xf) != tuple(info):
                    continue
                gaps.append(_one_shot_gain(game.spec, ev, key, xf))
        return max(gaps) if gaps else 0.0
    if player == "leader":
        recursion = _ExactStageRecursion(game)
        gaps = _leader_node_gaps(game, ev, recursion)
        picked = [gap for key, gap in gaps.items()
                  if (t is None or key[0] == t) and (info is None or key == info)]
        return max(picked) if picked else 0.0
    raise ValueError(f"unknown player {player!r}")


def _one_shot_gain(spec, ev: ProfileEvaluation, key, xf: int) -> float:
    """Gain from changing the follower action at one node/type only."""
    node = ev.tree[key]
    delta = spec.discount
    dev_best = -np.inf
    for af in range(spec.n_follower_actions):
        total = 0.0
        for xl in range(spec.n_leader_states):
            if node.pi[xl] == 0.0:
                continue
            al = node.leader_map[xl]
            r = float(spec.follower_reward(node.z, xl, xf, al, af))
            child = (ev.follower_values[node.children[al]]
                     if node.children else np.zeros(spec.n_follower_states))
            q = np.asarray(spec.follower_kernel(node.z, xl, xf, al, af))
            total += node.pi[xl] * (r + delta * float(q @ child))
        dev_best = max(dev_best, total)
    return dev_best - float(ev.follower_values[key][xf])


def profile_from_generator(game: TinyGame, generator,
                           initial_index: int = 0) -> OracleProfile:
    """Extract the solver's pure profile over the reachable public tree.

    Requires every reached public state to sit exactly on the solver grid
    and every prescription there to be pure; tiny games are built to close
    their dynamics over the grid so this holds.
    """
    spec = game.spec
    T = spec.horizon
    pi1, z1 = game.initial_points[initial_index]
    leader_assign, follower_assign = {}, {}

    def visit(t, pi, z):
        key = node_key(t, pi, z)
        if key in leader_assign:
            return
        flat, exact = generator.grid_lookup(pi, z)
        if not exact:
            raise ValueError(f"reached off-grid public state at t={t}")
        sol = generator.policy_for(t).solution(flat)
        pure = sol.prescription.pure_actions()
        if pure is None:
            raise ValueError(f"solver prescription at t={t} is not pure")
        lm, fm = pure
        leader_assign[key] = lm
        follower_assign[key] = fm
        if t < T:
            z_next, children = _node_children(spec, pi, z, lm, fm)
            for al, (w, pi_next) in children.items():
                visit(t + 1, pi_next, z_next)

    visit(1, pi1, z1)
    return OracleProfile(leader=leader_assign, follower=follower_assign)


def oracle_report(game: TinyGame, generator=None, tol: float = 1e-9) -> dict:
    """JSON-ready report: every equilibrium profile and its deviation gains."""
    report = {"initial_points": [], "horizon": game.spec.horizon,
              "game": game.spec.name}
    for idx, (pi1, z1) in enumerate(game.initial_points):
        results = enumerate_smfe(game, idx, tol)
        entry = {
            "initial_leader_belief": [float(v) for v in pi1],
            "initial_mean_field": [float(v) for v in z1],
            "n_smfe": len(results),
            "profiles": [],
        }
        solver_key = None
        if generator is not None:
            solver_key = profile_from_generator(game, generator, idx).key()
            entry["solver_profile_in_smfe_set"] = any(
                r.profile.key() == solver_key for r in results)
        for r in results:
            entry["profiles"].append({
                "leader": {str(k): list(v) for k, v in sorted(r.profile.leader.items())},
                "follower": {str(k): list(v) for k, v in sorted(r.profile.follower.items())},
                "leader_root_value": r.evaluation.root_leader_value,
                "leader_gain": r.leader_gain,
                "max_follower_gain": r.max_follower_gain,
                "matches_solver": (solver_key is not None
                                   and r.profile.key() == solver_key),
            })
        report["initial_points"].append(entry)
    return report
