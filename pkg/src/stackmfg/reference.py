"""Reference recursion for games whose leader has a single private state.

When the leader carries no private information the public belief is
degenerate and drops out: value tables live on the mean-field simplex alone,
the leader prescription is an unconditional action distribution, and the
Bayes update disappears.  This module codes that reduced recursion directly,
without reusing the stage solver, so the two paths can be cross-checked on
any single-leader-state game.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from .errors import NoEquilibriumError, NonConvergenceError
from .game import GameSpec
from .grids import SimplexGrid, simplex_weights


def _require_single_leader_state(spec: GameSpec):
    if spec.n_leader_states != 1:
        raise ValueError("reference recursion applies only when the leader "
                         "has a single private state")


class _ZTable:
    """Values over the mean-field grid alone."""

    def __init__(self, grid: SimplexGrid, values: np.ndarray):
        self.grid = grid
        self.values = np.asarray(values, dtype=np.float64)

    def at(self, z):
        idx, w = simplex_weights(self.grid, z)
        return w @ self.values[idx]


def _stage_at(spec: GameSpec, z, vf_next: _ZTable, vl_next: _ZTable,
              br_tol: float = 1e-9):
    """One stage solve at a single mean field; returns values and prescription.

    Enumerates leader actions and pure follower maps; a follower map is a
    fixed point if each type's played action attains the row maximum of the
    expected reward-to-go computed with the next mean field induced by the
    map itself.
    """
    n_f, n_af = spec.n_follower_states, spec.n_follower_actions
    n_al = spec.n_leader_actions
    delta = spec.discount
    z = np.asarray(z, dtype=np.float64)

    best = None     # (value, al, bf, obj, z_next)
    for al in range(n_al):
        for bf in itertools.product(range(n_af), repeat=n_f):
            z_next = np.zeros(n_f)
            for xf in range(n_f):
                z_next += z[xf] * np.asarray(
                    spec.follower_kernel(z, 0, xf, al, bf[xf]), dtype=np.float64)
            z_next = np.clip(z_next, 0.0, None)
            z_next = z_next / z_next.sum()
            if delta != 0.0:
                idx, w = simplex_weights(vf_next.grid, z_next)
                vf_interp = w @ vf_next.values[idx, :]
            else:
                vf_interp = np.zeros(n_f)

            obj = np.empty((n_f, n_af))
            for xf in range(n_f):
                for af in range(n_af):
                    r = float(spec.follower_reward(z, 0, xf, al, af))
                    q = np.asarray(spec.follower_kernel(z, 0, xf, al, af),
                                   dtype=np.float64)
                    obj[xf, af] = r + delta * float(q @ vf_interp)
            if any(obj[xf, bf[xf]] < obj[xf].max() - br_tol for xf in range(n_f)):
                continue

            gamma_f = np.zeros((n_f, n_af))
            for xf, af in enumerate(bf):
                gamma_f[xf, af] = 1.0
            lead = float(spec.leader_reward(z, 0, al, gamma_f))
            if delta != 0.0:
                li, lw = simplex_weights(vl_next.grid, z_next)
                lead += delta * float(lw @ vl_next.values[li, 0])
            if best is None or lead > best[0]:
                best = (lead, al, bf, obj, z_next)
    if best is None:
        raise NoEquilibriumError("no stage fixed point", pi=np.array([1.0]), z=z)
    lead, al, bf, obj, _ = best
    vf_row = np.array([obj[xf, bf[xf]] for xf in range(n_f)])
    return vf_row, lead, (al, bf)


def _sweep(spec, grid, vf, vl, br_tol):
    new_f = np.zeros_like(vf.values)
    new_l = np.zeros_like(vl.values)
    policy = []
    for i in range(grid.n_points):
        vf_row, lead, choice = _stage_at(spec, grid.points[i], vf, vl, br_tol)
        new_f[i, :] = vf_row
        new_l[i, 0] = lead
        policy.append(choice)
    return _ZTable(grid, new_f), _ZTable(grid, new_l), policy


def backward_finite(spec: GameSpec, grid: SimplexGrid, horizon: Optional[int] = None,
                    br_tol: float = 1e-9):
    """Finite-horizon reduced recursion.

    Returns (follower tables, leader tables, policies), each a list indexed
    so that entry k belongs to stage k+1 and the terminal entry is zero.
    Follower tables have shape (n_grid, n_follower_states); leader tables
    (n_grid, 1).
    """
    _require_single_leader_state(spec)
    T = horizon if horizon is not None else spec.horizon
    if T is None:
        raise ValueError("horizon required")
    vf = _ZTable(grid, np.zeros((grid.n_points, spec.n_follower_states)))
    vl = _ZTable(grid, np.zeros((grid.n_points, 1)))
    f_tables = [None] * (T + 1)
    l_tables = [None] * (T + 1)
    policies = [None] * T
    f_tables[T], l_tables[T] = vf, vl
    for t in range(T, 0, -1):
        vf, vl, policy = _sweep(spec, grid, vf, vl, br_tol)
        f_tables[t - 1], l_tables[t - 1] = vf, vl
        policies[t - 1] = policy
    return f_tables, l_tables, policies


def value_iteration(spec: GameSpec, grid: SimplexGrid, tol: float = 1e-6,
                    max_iter: int = 2000, n_iters: Optional[int] = None,
                    br_tol: float = 1e-9):
    """Stationary reduced recursion by value iteration.

    With ``n_iters`` set, runs exactly that many sweeps from zero tables
    (useful for lockstep comparisons); otherwise iterates to ``tol``.
    Returns (follower table, leader table, policy, deltas).
    """
    _require_single_leader_state(spec)
    vf = _ZTable(grid, np.zeros((grid.n_points, spec.n_follower_states)))
    vl = _ZTable(grid, np.zeros((grid.n_points, 1)))
    deltas = []
    policy = None
    limit = n_iters if n_iters is not None else max_iter
    for _ in range(limit):
        new_f, new_l, policy = _sweep(spec, grid, vf, vl, br_tol)
        delta = max(float(np.max(np.abs(new_f.values - vf.values))),
                    float(np.max(np.abs(new_l.values - vl.values))))
        deltas.append(delta)
        vf, vl = new_f, new_l
        if n_iters is None and delta < tol:
            return vf, vl, policy, deltas
    if n_iters is not None:
        return vf, vl, policy, deltas
    raise NonConvergenceError(
        f"reference value iteration did not reach {tol:g} in {max_iter} sweeps",
        deltas=deltas)
