"""Horizon-level drivers: backward recursion, stationary solve, trajectories.

Stage indexing convention: game stages are 1-based (1..T).  ``tables[k]``
holds the value tables at stage k+1, so ``tables[0]`` is the stage-1 table
and ``tables[T]`` the identically-zero terminal table.  ``stages[k]`` is the
prescription map used at stage k+1.  A stationary solve produces a single
stage entry applied at every time.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import Prescription, belief_step_total, mean_field_step
from .errors import NoEquilibriumError, NonConvergenceError
from .game import GameSpec
from .grids import JointGrid, JointTable
from .stage import SolverConfig, StagePointSolver, StageSolution


def _run_map(fn, items, threads: int):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(item) for item in items]


@dataclass
class StagePolicy:
    """Stage solutions per joint grid point (flat indexing)."""

    joint: JointGrid
    solutions: list

    def solution(self, flat: int) -> Optional[StageSolution]:
        return self.solutions[flat]


@dataclass
class EquilibriumGenerator:
    """Prescriptions for every stage and joint grid point.

    For finite horizons ``stages`` has one policy per stage; a stationary
    solve stores a single policy used at all times.  ``failures`` lists
    (stage, belief, mean field) coordinates left unsolved in partial mode.
    """

    joint: JointGrid
    stages: list
    stationary: bool
    tables: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def partial(self) -> bool:
        return bool(self.failures)

    def policy_for(self, t: int) -> StagePolicy:
        """Stage policy used at 1-based stage ``t``."""
        if self.stationary:
            return self.stages[0]
        if not 1 <= t <= len(self.stages):
            raise IndexError(f"stage {t} outside horizon {len(self.stages)}")
        return self.stages[t - 1]

    def continuation_for(self, t: int):
        """(V^f, V^l) continuation tables used when solving stage ``t``."""
        if self.stationary:
            return self.tables[0]
        return self.tables[t]

    def grid_lookup(self, pi, z):
        """(flat index, exact flag): exact grid hit or nearest grid point."""
        pi = np.asarray(pi, dtype=np.float64)
        z = np.asarray(z, dtype=np.float64)
        pg, zg = self.joint.pi_grid, self.joint.z_grid
        try:
            i = pg.index_of(np.rint(pi * pg.resolution))
            j = zg.index_of(np.rint(z * zg.resolution))
        except KeyError:
            i = j = None
        if (i is not None
                and np.max(np.abs(pg.points[i] - pi)) <= 1e-12
                and np.max(np.abs(zg.points[j] - z)) <= 1e-12):
            return self.joint.flat_index(i, j), True
        d_pi = np.sum((pg.points - pi) ** 2, axis=1)
        d_z = np.sum((zg.points - z) ** 2, axis=1)
        flat = self.joint.flat_index(int(np.argmin(d_pi)), int(np.argmin(d_z)))
        return flat, False


@dataclass
class ConvergenceReport:
    """Per-sweep sup-norm deltas and prescription stability flags."""

    deltas: list = field(default_factory=list)
    prescription_stable: list = field(default_factory=list)
    converged: bool = False
    tolerance: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.deltas)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "tolerance": self.tolerance,
            "deltas": self.deltas,
            "prescription_stable": self.prescription_stable,
        }


class _StageWorkspace:
    """Lazy per-point solvers, reused across stages and sweeps."""

    def __init__(self, spec: GameSpec, joint: JointGrid, config: SolverConfig):
        self.spec = spec
        self.joint = joint
        self.config = config
        self._solvers = [None] * joint.n_points

    def solver(self, flat: int) -> StagePointSolver:
        if self._solvers[flat] is None:
            pi, z = self.joint.point(flat)
            self._solvers[flat] = StagePointSolver(self.spec, pi, z, self.joint,
                                                   self.config)
        return self._solvers[flat]

    def sweep(self, vf: JointTable, vl: JointTable, t: Optional[int] = None,
              prefer: Optional[Callable] = None, allow_partial: bool = False):
        """Solve every grid point against the given continuation tables."""
        vf_flat = vf.flat_values()
        vl_flat = vl.flat_values()
        failures = []

        def solve_point(flat):
            solver = self.solver(flat)
            wrapped = None
            if prefer is not None:
                pi, z = self.joint.point(flat)
                wrapped = lambda gl, bf: prefer(t, pi, z, gl, bf)
            try:
                return solver.solve(vf_flat, vl_flat, prefer=wrapped, t=t)
            except NoEquilibriumError:
                if not allow_partial:
                    raise
                return None

        solutions = _run_map(solve_point, range(self.joint.n_points),
                             self.config.threads)
        n_pi = self.joint.pi_grid.n_points
        n_z = self.joint.z_grid.n_points
        new_f = np.zeros((n_pi, n_z, self.spec.n_follower_states))
        new_l = np.zeros((n_pi, n_z, self.spec.n_leader_states))
        for flat, sol in enumerate(solutions):
            i, j = self.joint.unravel(flat)
            if sol is None:
                pi, z = self.joint.point(flat)
                failures.append((t, pi.copy(), z.copy()))
                continue
            new_f[i, j, :] = sol.follower_values
            new_l[i, j, :] = sol.leader_values
        return (StagePolicy(self.joint, solutions),
                JointTable(self.joint, new_f), JointTable(self.joint, new_l),
                failures)


def backward_pass(spec: GameSpec, joint: JointGrid,
                  config: Optional[SolverConfig] = None,
                  prefer: Optional[Callable] = None,
                  allow_partial: bool = False):
    """Finite-horizon backward recursion over the joint grid.

    Returns (generator, tables) with ``tables[k]`` the stage-(k+1) value
    tables; the terminal entry is zero.  Raises NoEquilibriumError annotated
    with (t, belief, mean field) unless ``allow_partial``.
    """
    if spec.horizon is None:
        raise ValueError("backward_pass needs a finite horizon; "
                         "use solve_stationary for discounted infinite games")
    config = config or SolverConfig()
    T = spec.horizon
    ws = _StageWorkspace(spec, joint, config)
    tables = [None] * (T + 1)
    tables[T] = (JointTable.zeros(joint, spec.n_follower_states),
                 JointTable.zeros(joint, spec.n_leader_states))
    stages = [None] * T
    failures = []
    for t in range(T, 0, -1):
        vf_next, vl_next = tables[t]
        policy, vf, vl, fails = ws.sweep(vf_next, vl_next, t=t, prefer=prefer,
                                         allow_partial=allow_partial)
        stages[t - 1] = policy
        tables[t - 1] = (vf, vl)
        failures.extend(fails)
    gen = EquilibriumGenerator(joint=joint, stages=stages, stationary=False,
                               tables=tables, failures=failures)
    return gen, tables


def solve_stationary(spec: GameSpec, joint: JointGrid, tol: float = 1e-6,
                     max_iter: int = 2000, config: Optional[SolverConfig] = None,
                     initial_tables=None,
                     prefer: Optional[Callable] = None):
    """Value iteration for the discounted stationary game.

    Sweeps the stage solver with the current tables as continuation until
    the sup-norm change of both tables drops below ``tol``.  Returns
    (generator, (V^f, V^l), ConvergenceReport); raises NonConvergenceError
    carrying the delta history otherwise.
    """
    if not spec.infinite_horizon:
        raise ValueError("solve_stationary expects an infinite-horizon spec")
    if not spec.discount < 1.0:
        raise ValueError("stationary solve requires discount < 1")
    config = config or SolverConfig()
    ws = _StageWorkspace(spec, joint, config)
    if initial_tables is None:
        vf = JointTable.zeros(joint, spec.n_follower_states)
        vl = JointTable.zeros(joint, spec.n_leader_states)
    else:
        vf, vl = initial_tables
    report = ConvergenceReport(tolerance=tol)
    prev_prescriptions = None
    for _ in range(max_iter):
        policy, new_vf, new_vl, _ = ws.sweep(vf, vl, t=None, prefer=prefer)
        delta = max(new_vf.max_abs_diff(vf), new_vl.max_abs_diff(vl))
        prescriptions = [(sol.prescription.leader, sol.prescription.follower)
                         for sol in policy.solutions]
        stable = prev_prescriptions is not None and all(
            np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            for a, b in zip(prescriptions, prev_prescriptions))
        report.deltas.append(float(delta))
        report.prescription_stable.append(stable)
        prev_prescriptions = prescriptions
        vf, vl = new_vf, new_vl
        if delta < tol:
            report.converged = True
            gen = EquilibriumGenerator(joint=joint, stages=[policy],
                                       stationary=True, tables=[(vf, vl)])
            return gen, (vf, vl), report
    raise NonConvergenceError(
        f"stationary solve did not reach {tol:g} in {max_iter} sweeps "
        f"(last delta {report.deltas[-1]:.3e})", deltas=report.deltas)


# ---------------------------------------------------------------------------
# Forward recursion


@dataclass
class Branch:
    """One public-history branch of an expected-path trajectory."""

    weight: float
    pi: np.ndarray
    z: np.ndarray
    # follower type distribution rows per starting type, leader-posterior
    # weighted; used for the representative-follower accumulators.
    xi: np.ndarray


@dataclass
class TrajectoryStep:
    t: int
    branches: list
    prescriptions: list          # Prescription per branch
    action_marginals: list       # leader action marginal per branch
    leader_reward: float         # weight-averaged instantaneous reward
    follower_reward: float       # population-average instantaneous reward
    offgrid_lookups: int = 0


@dataclass
class Trajectory:
    steps: list
    leader_discounted: float
    follower_discounted: np.ndarray
    mode: str
    seed: Optional[int]
    lost_weight: float = 0.0
    offgrid_lookups: int = 0

    def mean_field_path(self) -> np.ndarray:
        """Weight-averaged mean field per step (exact when unbranched)."""
        out = []
        for step in self.steps:
            z = sum(b.weight * b.z for b in step.branches)
            out.append(z / sum(b.weight for b in step.branches))
        return np.asarray(out)


def _branch_prescription(spec, generator, t, branch, offgrid, config):
    flat, exact = generator.grid_lookup(branch.pi, branch.z)
    if exact:
        sol = generator.policy_for(t).solution(flat)
        if sol is None:
            raise NoEquilibriumError("trajectory hit an unsolved grid point",
                                     t=t, pi=branch.pi, z=branch.z)
        return sol.prescription, 0
    if offgrid == "nearest":
        sol = generator.policy_for(t).solution(flat)
        if sol is None:
            raise NoEquilibriumError("trajectory hit an unsolved grid point",
                                     t=t, pi=branch.pi, z=branch.z)
        return sol.prescription, 1
    if offgrid == "resolve":
        vf, vl = generator.continuation_for(t)
        solver = StagePointSolver(spec, branch.pi, branch.z, generator.joint, config)
        sol = solver.solve(vf.flat_values(), vl.flat_values(), t=t)
        return sol.prescription, 1
    raise ValueError(f"unknown offgrid policy {offgrid!r}")


def _instant_rewards(spec, branch, gamma: Prescription):
    pi, z, xi = branch.pi, branch.z, branch.xi
    gl, gf = gamma.leader, gamma.follower
    rf = spec.follower_reward_tensor(z)                 # (n_l, n_f, n_al, n_af)
    w_la = pi[:, None] * gl
    rl = 0.0
    for xl in range(spec.n_leader_states):
        for al in range(spec.n_leader_actions):
            if w_la[xl, al] > 0.0:
                rl += w_la[xl, al] * float(spec.leader_reward(z, xl, al, gf))
    per_type = np.einsum("la,lfab,fb->f", w_la, rf, gf)  # E[R^f | x^f]
    pop = float(z @ per_type)
    rep = xi @ per_type                                  # per starting type
    return rl, pop, rep


def _transition_kernels(spec, branch, gamma: Prescription):
    """Per leader action: (marginal prob, posterior, follower transition matrix)."""
    pi, z = branch.pi, branch.z
    gl, gf = gamma.leader, gamma.follower
    qf = spec.follower_kernel_tensor(z)
    out = {}
    for al in range(spec.n_leader_actions):
        w = float(pi @ gl[:, al])
        if w <= 0.0:
            continue
        post = pi * gl[:, al] / w
        k = np.einsum("l,lfbn,fb->fn", post, qf[:, :, al, :, :], gf)
        out[al] = (w, post, k)
    return out


def forward_pass(spec: GameSpec, generator: EquilibriumGenerator, pi1, z1,
                 steps: Optional[int] = None, mode: str = "expected",
                 seed: Optional[int] = None, offgrid: str = "nearest",
                 config: Optional[SolverConfig] = None) -> Trajectory:
    """Unroll equilibrium play from an initial (belief, mean field).

    Expected-path mode propagates the mean field exactly and branches the
    belief over realized leader actions (branches with identical beliefs are
    merged; at most ``config.branch_cap`` kept by weight).  Sampled mode
    draws one leader action path with the given seed.
    """
    config = config or SolverConfig()
    if steps is None:
        if generator.stationary:
            raise ValueError("steps is required for a stationary generator")
        steps = generator.n_stages
    if not generator.stationary and steps > generator.n_stages:
        raise ValueError(f"horizon has {generator.n_stages} stages, asked for {steps}")
    rng = np.random.default_rng(seed) if mode == "sampled" else None

    n_f = spec.n_follower_states
    pi = np.asarray(pi1, dtype=np.float64)
    z = np.asarray(z1, dtype=np.float64)
    branches = [Branch(weight=1.0, pi=pi, z=z, xi=np.eye(n_f))]
    steps_out = []
    leader_acc = 0.0
    follower_acc = np.zeros(n_f)
    lost_weight = 0.0
    offgrid_total = 0
    disc = 1.0

    for t in range(1, steps + 1):
        stage_t = t if not generator.stationary else 1
        prescriptions = []
        marginals = []
        step_rl = 0.0
        step_pop = 0.0
        step_offgrid = 0
        next_branches = []
        for branch in branches:
            gamma, off = _branch_prescription(spec, generator, stage_t, branch,
                                              offgrid, config)
            step_offgrid += off
            prescriptions.append(gamma)
            rl, pop, rep = _instant_rewards(spec, branch, gamma)
            step_rl += branch.weight * rl
            step_pop += branch.weight * pop
            leader_acc += disc * branch.weight * rl
            follower_acc += disc * branch.weight * rep

            kernels = _transition_kernels(spec, branch, gamma)
            marginals.append(np.array([kernels.get(al, (0.0,))[0]
                                       for al in range(spec.n_leader_actions)]))
            z_next = mean_field_step(branch.pi, branch.z, gamma, spec)

            if mode == "sampled":
                als = sorted(kernels)
                probs = np.array([kernels[al][0] for al in als])
                al = als[int(rng.choice(len(als), p=probs / probs.sum()))]
                w, post, k = kernels[al]
                pi_next, _ = belief_step_total(branch.pi, branch.z, gamma.leader,
                                               al, spec, eps=config.bayes_eps)
                next_branches.append(Branch(weight=branch.weight, pi=pi_next,
                                            z=z_next, xi=branch.xi @ k))
                continue

            # Expected path: group leader actions by the belief they induce.
            groups = {}
            for al, (w, post, k) in kernels.items():
                pi_next, _ = belief_step_total(branch.pi, branch.z, gamma.leader,
                                               al, spec, eps=config.bayes_eps)
                key = tuple(np.round(pi_next, 12))
                if key not in groups:
                    groups[key] = [0.0, pi_next, np.zeros_like(branch.xi)]
                groups[key][0] += w
                groups[key][2] += w * (branch.xi @ k)
            for _, (w, pi_next, xi_acc) in sorted(groups.items()):
                next_branches.append(Branch(weight=branch.weight * w, pi=pi_next,
                                            z=z_next, xi=xi_acc / w))

        steps_out.append(TrajectoryStep(
            t=t, branches=branches, prescriptions=prescriptions,
            action_marginals=marginals, leader_reward=step_rl,
            follower_reward=step_pop, offgrid_lookups=step_offgrid))
        offgrid_total += step_offgrid

        if len(next_branches) > config.branch_cap:
            next_branches.sort(key=lambda b: -b.weight)
            dropped = next_branches[config.branch_cap:]
            lost_weight += sum(b.weight for b in dropped)
            next_branches = next_branches[:config.branch_cap]
            total = sum(b.weight for b in next_branches)
            for b in next_branches:
                b.weight /= total
        branches = next_branches
        disc *= spec.discount

    return Trajectory(steps=steps_out, leader_discounted=leader_acc,
                      follower_discounted=follower_acc, mode=mode, seed=seed,
                      lost_weight=lost_weight, offgrid_lookups=offgrid_total)


# ---------------------------------------------------------------------------
# Exact expected values under a given prescription policy


def exact_values(spec: GameSpec, policy: Callable, pi1, z1, horizon: int,
                 bayes_eps: float = 1e-12):
    """Exact expected discounted values by exhaustive tree expansion.

    ``policy(t, pi, z) -> Prescription`` defines play at every reachable
    public state.  Returns (follower values per starting type, leader values
    per starting type), conditioning on the start type and the initial
    belief.  Independent of the value tables, so it double-checks them.
    """
    pi1 = np.asarray(pi1, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    memo = {}

    def node(t, pi, z):
        if t > horizon:
            return np.zeros(spec.n_follower_states), np.zeros(spec.n_leader_states)
        key = (t, tuple(np.round(pi, 12)), tuple(np.round(z, 12)))
        if key in memo:
            return memo[key]
        gamma = policy(t, pi, z)
        gl, gf = gamma.leader, gamma.follower
        z_next = mean_field_step(pi, z, gamma, spec)
        qf = spec.follower_kernel_tensor(z)
        rf = spec.follower_reward_tensor(z)
        ql = spec.leader_kernel_tensor(z)

        children = {}
        for al in range(spec.n_leader_actions):
            if np.any(gl[:, al] > 0.0):
                pi_next, _ = belief_step_total(pi, z, gl, al, spec, eps=bayes_eps)
                children[al] = node(t + 1, pi_next, z_next)

        vf = np.zeros(spec.n_follower_states)
        vl = np.zeros(spec.n_leader_states)
        for xl in range(spec.n_leader_states):
            for al, child in children.items():
                w_pub = pi[xl] * gl[xl, al]
                if w_pub > 0.0:
                    inst = np.sum(gf * (rf[xl, :, al, :]
                                        + spec.discount * (qf[xl, :, al, :, :] @ child[0])),
                                  axis=1)
                    vf += w_pub * inst
                if gl[xl, al] > 0.0:
                    vl[xl] += gl[xl, al] * (
                        float(spec.leader_reward(z, xl, al, gf))
                        + spec.discount * float(ql[xl, al, :] @ child[1]))
        memo[key] = (vf, vl)
        return memo[key]

    return node(1, pi1, z1)


def generator_policy(generator: EquilibriumGenerator) -> Callable:
    """Policy callable over exact grid points backed by a generator."""

    def policy(t, pi, z):
        flat, exact = generator.grid_lookup(pi, z)
        if not exact:
            raise ValueError(f"public state off-grid at t={t}: pi={pi}, z={z}")
        sol = generator.policy_for(t if not generator.stationary else 1).solution(flat)
        if sol is None:
            raise NoEquilibriumError("unsolved grid point", t=t, pi=pi, z=z)
        return sol.prescription

    return policy
