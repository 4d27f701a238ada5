"""Built-in example games.

Two stationary discounted games with binary follower types and a leader who
has no private state but a discretized continuous control:

* an infection-spread game where the leader posts a repair price and wants
  welfare plus the net price margin, and
* a technology-adoption game where the leader prices one of two competing
  products under sticky user preferences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .game import GameSpec


def _uniform_grid(high: float, n: int):
    if n < 1 or high < 0:
        raise ValueError("grid needs n >= 1 points on a nonnegative range")
    if n == 1:
        return (0.0,)
    return tuple(np.linspace(0.0, high, n))


@dataclass
class InfectionParams:
    """Parameters of the infection game.

    ``k`` is the per-stage cost of being infected, ``q`` scales the infection
    probability with the infected fraction, ``lam`` is the baseline repair
    cost, and ``c`` (defaulting to ``lam``) offsets the leader's price margin
    term.  The leader's repair price lives on ``subsidy_grid`` inside
    [0, c_max].
    """

    k: float = 0.2
    q: float = 0.9
    lam: float = 0.2
    delta: float = 0.9
    c: Optional[float] = None
    c_max: float = 1.0
    subsidy_points: int = 21
    subsidy_grid: Optional[tuple] = None
    horizon: Optional[int] = None
    initial_infected: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"q must lie in [0, 1], got {self.q}")
        if self.k < 0 or self.lam < 0:
            raise ValueError("k and lam must be nonnegative")
        if self.c is None:
            self.c = self.lam
        if self.subsidy_grid is None:
            self.subsidy_grid = _uniform_grid(self.c_max, self.subsidy_points)
        self.subsidy_grid = tuple(float(v) for v in self.subsidy_grid)
        if not self.subsidy_grid:
            raise ValueError("subsidy grid must be nonempty")
        if min(self.subsidy_grid) < 0 or max(self.subsidy_grid) > self.c_max:
            raise ValueError("subsidy grid must lie inside [0, c_max]")
        if not 0.0 <= self.initial_infected <= 1.0:
            raise ValueError("initial infected fraction must lie in [0, 1]")


def build_infection_game(params: InfectionParams = None) -> GameSpec:
    """Infection game: states (healthy, infected), actions (wait, repair).

    Doing nothing keeps an infected node infected and infects a healthy one
    with probability q * z(infected); repairing returns the node to healthy
    surely but costs the posted price.  The leader reward is population
    welfare under the follower prescription plus (price - c).
    """
    p = params or InfectionParams()
    prices = np.array(p.subsidy_grid)
    k, q, c = p.k, p.q, p.c

    def follower_kernel(z, xl, xf, al, af):
        if af == 1:
            return np.array([1.0, 0.0])
        if xf == 1:
            return np.array([0.0, 1.0])
        w = q * z[1]
        return np.array([1.0 - w, w])

    def leader_kernel(z, al, xl):
        return np.array([1.0])

    def follower_reward(z, xl, xf, al, af):
        return -k * xf - prices[al] * af

    def leader_reward(z, xl, al, gamma_f):
        welfare = 0.0
        for xf in range(2):
            for af in range(2):
                welfare += z[xf] * gamma_f[xf, af] * (-k * xf - prices[al] * af)
        return welfare + (prices[al] - c)

    return GameSpec(
        follower_states=("healthy", "infected"),
        leader_states=("L",),
        follower_actions=("wait", "repair"),
        leader_actions=tuple(f"{v:g}" for v in prices),
        leader_kernel=leader_kernel,
        follower_kernel=follower_kernel,
        follower_reward=follower_reward,
        leader_reward=leader_reward,
        discount=p.delta,
        horizon=p.horizon,
        initial_leader_belief=np.array([1.0]),
        initial_mean_field=np.array([1.0 - p.initial_infected, p.initial_infected]),
        name="infection",
        metadata={"params": {"k": k, "q": q, "lam": p.lam, "c": c,
                             "delta": p.delta, "subsidy_grid": list(prices)}},
    )


@dataclass
class TechAdoptionParams:
    """Parameters of the technology-adoption game.

    Preferences flip with probability ``p1`` when a user buys the product
    matching her preference and ``p2`` otherwise, with p1 < p2 < 1/2
    (stickiness).  ``c_minus1`` is the fixed competitor price; the leader's
    own price lives on ``price_grid``.
    """

    p1: float = 0.2
    p2: float = 0.4
    c_minus1: float = -1.0
    delta: float = 0.9
    c_max: float = 1.0
    price_points: int = 21
    price_grid: Optional[tuple] = None
    horizon: Optional[int] = None
    initial_adopters: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.p1 < self.p2 < 0.5:
            raise ValueError(f"need 0 <= p1 < p2 < 0.5, got p1={self.p1}, p2={self.p2}")
        if self.price_grid is None:
            self.price_grid = _uniform_grid(self.c_max, self.price_points)
        self.price_grid = tuple(float(v) for v in self.price_grid)
        if not self.price_grid:
            raise ValueError("price grid must be nonempty")
        if not 0.0 <= self.initial_adopters <= 1.0:
            raise ValueError("initial adopter fraction must lie in [0, 1]")


def build_tech_adoption_game(params: TechAdoptionParams = None) -> GameSpec:
    """Adoption game: preference states (-1, 1), product choices (-1, 1).

    A user gets x*a for matching her preference, a network term
    (2 z(1) - 1)*a, and pays the chosen product's price.  The leader earns
    her price times the fraction buying product 1.  States and actions are
    ordered (-1, 1), so index 1 means preference/product 1.
    """
    p = params or TechAdoptionParams()
    prices = np.array(p.price_grid)
    vals = (-1.0, 1.0)

    def follower_kernel(z, xl, xf, al, af):
        flip = p.p1 if af == xf else p.p2
        row = np.zeros(2)
        row[xf] = 1.0 - flip
        row[1 - xf] = flip
        return row

    def leader_kernel(z, al, xl):
        return np.array([1.0])

    def follower_reward(z, xl, xf, al, af):
        x, a = vals[xf], vals[af]
        cost = prices[al] if af == 1 else p.c_minus1
        return x * a + (2.0 * z[1] - 1.0) * a - cost

    def leader_reward(z, xl, al, gamma_f):
        buying = z[1] * gamma_f[1, 1] + z[0] * gamma_f[0, 1]
        return prices[al] * buying

    return GameSpec(
        follower_states=("-1", "1"),
        leader_states=("L",),
        follower_actions=("-1", "1"),
        leader_actions=tuple(f"{v:g}" for v in prices),
        leader_kernel=leader_kernel,
        follower_kernel=follower_kernel,
        follower_reward=follower_reward,
        leader_reward=leader_reward,
        discount=p.delta,
        horizon=p.horizon,
        initial_leader_belief=np.array([1.0]),
        initial_mean_field=np.array([1.0 - p.initial_adopters, p.initial_adopters]),
        name="tech",
        metadata={"params": {"p1": p.p1, "p2": p.p2, "c_minus1": p.c_minus1,
                             "delta": p.delta, "price_grid": list(prices)}},
    )


BUILTIN_GAMES = {
    "infection": (InfectionParams, build_infection_game),
    "tech": (TechAdoptionParams, build_tech_adoption_game),
}


def build_game(name: str, overrides: Optional[dict] = None) -> GameSpec:
    """Build a named game with keyword parameter overrides."""
    if name not in BUILTIN_GAMES:
        raise KeyError(f"unknown game {name!r}; available: {sorted(BUILTIN_GAMES)}")
    params_cls, builder = BUILTIN_GAMES[name]
    params = params_cls(**(overrides or {}))
    return builder(params)
