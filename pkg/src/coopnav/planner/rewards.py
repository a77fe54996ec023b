"""Task reward terms, communication cost, and the feasibility backup rule."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..geometry import Cell


@dataclass(frozen=True)
class RewardConfig:
    goal_reward: float = 100.0
    step_penalty: float = -1.0
    comm_base_cost: float = 10.0

    def __post_init__(self):
        if self.goal_reward <= 0:
            raise ValueError("goal reward must be positive")


def r_env(
    last_state: Cell,
    unclaimed_goals,
    config: RewardConfig,
) -> float:
    """Goal bonus on the first visit to a goal, step penalty otherwise."""
    if last_state in unclaimed_goals:
        return config.goal_reward
    return config.step_penalty


def r_guidance(last_state: Cell, zeta, steps_since_comm: int) -> float:
    """Zero on the suggested path; off it, -ln(n) in the steps since the last
    communication (so straying for long without re-syncing gets expensive)."""
    if last_state in zeta:
        return 0.0
    return -math.log(max(steps_since_comm, 1))


def r_smooth(tau_counts, last_state: Cell) -> float:
    """Minus the number of earlier visits of the current state within tau."""
    return -float(tau_counts.get(last_state, 0))


def comm_cost(zeta, visited, config: RewardConfig) -> float:
    """Base cost plus one per suggested state the robot has not yet visited."""
    unvisited = sum(1 for cell in zeta if cell not in visited)
    return config.comm_base_cost + unvisited


def propagate_step(
    reward: float,
    gamma: float,
    delta_child: float,
    q_child: float,
    parent_mean: float,
) -> float:
    """One feasibility-weighted backup: r + gamma * [d q' + (1-d) Q(v)/N(v)].

    `parent_mean` is the fallback estimate Q(v)/N(v) of the node being
    updated (0 while unvisited).
    """
    return reward + gamma * (
        delta_child * q_child + (1.0 - delta_child) * parent_mean
    )
