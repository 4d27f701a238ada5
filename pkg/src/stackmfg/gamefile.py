"""Game definitions from JSON config files.

Two forms are accepted: a named built-in with parameter overrides, or an
explicit game with dense kernel/reward tables whose entries may be affine in
the mean field.  An affine entry is ``{"const": c, "z": [w_0, ...]}``
meaning ``c + w @ z``; a bare number is a constant entry.

Table index orders (outer to inner):
  follower_kernel [x_l][x_f][a_l][a_f] -> row over next follower states
  leader_kernel   [x_l][a_l]           -> row over next leader states
  follower_reward [x_l][x_f][a_l][a_f] -> entry
  leader_reward   [x_l][a_l]           -> entry

Setting ``"leader_reward_includes_welfare": true`` adds the population
average of the follower reward under the follower prescription.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .game import GameSpec
from .games import BUILTIN_GAMES


def _affine(entry, n_z):
    if isinstance(entry, (int, float)):
        return float(entry), np.zeros(n_z)
    if isinstance(entry, dict):
        const = float(entry.get("const", 0.0))
        coef = np.asarray(entry.get("z", [0.0] * n_z), dtype=np.float64)
        if coef.shape != (n_z,):
            raise ValueError(f"affine entry z-coefficients must have length {n_z}")
        return const, coef
    raise ValueError(f"table entry must be a number or an affine dict, got {entry!r}")


def _affine_table(nested, shape, n_z, name):
    const = np.zeros(shape)
    coef = np.zeros(shape + (n_z,))

    def fill(node, idx):
        if len(idx) == len(shape):
            c, w = _affine(node, n_z)
            const[idx] = c
            coef[idx] = w
            return
        if not isinstance(node, list) or len(node) != shape[len(idx)]:
            raise ValueError(
                f"{name}: expected list of length {shape[len(idx)]} at depth {len(idx)}")
        for i, sub in enumerate(node):
            fill(sub, idx + (i,))

    fill(nested, ())
    return const, coef


def _as_labels(raw, name):
    labels = tuple(str(v) for v in raw)
    if not labels:
        raise ValueError(f"{name} must be nonempty")
    return labels


def load_game_dict(cfg: dict) -> GameSpec:
    """Build a GameSpec from a parsed config dictionary."""
    if "builtin" in cfg:
        name = cfg["builtin"]
        if name not in BUILTIN_GAMES:
            raise ValueError(f"unknown builtin game {name!r}")
        params_cls, builder = BUILTIN_GAMES[name]
        spec = builder(params_cls(**cfg.get("params", {})))
        if "initial_points" in cfg:
            spec.metadata["initial_points"] = cfg["initial_points"]
        spec.metadata["config"] = cfg
        return spec

    follower_states = _as_labels(cfg["follower_states"], "follower_states")
    leader_states = _as_labels(cfg["leader_states"], "leader_states")
    follower_actions = _as_labels(cfg["follower_actions"], "follower_actions")
    leader_actions = _as_labels(cfg["leader_actions"], "leader_actions")
    n_f, n_l = len(follower_states), len(leader_states)
    n_af, n_al = len(follower_actions), len(leader_actions)

    fk_c, fk_w = _affine_table(cfg["follower_kernel"],
                               (n_l, n_f, n_al, n_af, n_f), n_f, "follower_kernel")
    lk_c, lk_w = _affine_table(cfg["leader_kernel"],
                               (n_l, n_al, n_l), n_f, "leader_kernel")
    fr_c, fr_w = _affine_table(cfg["follower_reward"],
                               (n_l, n_f, n_al, n_af), n_f, "follower_reward")
    lr_c, lr_w = _affine_table(cfg["leader_reward"],
                               (n_l, n_al), n_f, "leader_reward")
    welfare = bool(cfg.get("leader_reward_includes_welfare", False))

    def follower_kernel(z, xl, xf, al, af):
        return fk_c[xl, xf, al, af] + fk_w[xl, xf, al, af] @ np.asarray(z)

    def leader_kernel(z, al, xl):
        return lk_c[xl, al] + lk_w[xl, al] @ np.asarray(z)

    def follower_reward(z, xl, xf, al, af):
        return fr_c[xl, xf, al, af] + float(fr_w[xl, xf, al, af] @ np.asarray(z))

    def leader_reward(z, xl, al, gamma_f):
        z = np.asarray(z)
        total = lr_c[xl, al] + float(lr_w[xl, al] @ z)
        if welfare:
            for xf in range(n_f):
                for af in range(n_af):
                    total += z[xf] * gamma_f[xf, af] * follower_reward(z, xl, xf, al, af)
        return total

    horizon = cfg.get("horizon")
    if horizon in ("infinite", None):
        horizon = None
    else:
        horizon = int(horizon)

    spec = GameSpec(
        follower_states=follower_states,
        leader_states=leader_states,
        follower_actions=follower_actions,
        leader_actions=leader_actions,
        leader_kernel=leader_kernel,
        follower_kernel=follower_kernel,
        follower_reward=follower_reward,
        leader_reward=leader_reward,
        discount=float(cfg["discount"]),
        horizon=horizon,
        initial_leader_belief=np.asarray(cfg["initial_leader_belief"], dtype=np.float64),
        initial_mean_field=np.asarray(cfg["initial_mean_field"], dtype=np.float64),
        name=str(cfg.get("name", "config-game")),
        metadata={"config": cfg},
    )
    if "initial_points" in cfg:
        spec.metadata["initial_points"] = cfg["initial_points"]
    return spec


def load_game_file(path) -> GameSpec:
    """Load a game definition from a JSON file."""
    cfg = json.loads(Path(path).read_text())
    return load_game_dict(cfg)
