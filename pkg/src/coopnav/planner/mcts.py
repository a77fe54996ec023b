"""Uncertainty-aware Monte Carlo tree search.

The engine runs the four standard phases against a small problem interface so
any MDP-shaped binding (the maze world, the region graph, test toys) shares
the identical code paths:

  * expansion returns a feasibility score per new edge; moves into unexplored
    territory carry delta = 0.5, everything else 1.0;
  * a node created by a communication action stops the descent for that
    iteration (the rollout still starts there);
  * backpropagation blends each child's sampled return with the parent's
    running mean, weighted by the child's feasibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import PlanningError
from .rewards import propagate_step


@dataclass(frozen=True)
class MctsConfig:
    iterations: int = 100
    exploration: float = math.sqrt(2.0)
    gamma: float = 0.99
    max_depth: int = 100

    def __post_init__(self):
        if self.iterations < 1 or self.max_depth < 1:
            raise ValueError("iterations and depth must be at least 1")
        if self.exploration < 0:
            raise ValueError("exploration constant must be non-negative")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("discount must lie in [0, 1)")


@dataclass
class SearchNode:
    state: Any
    incoming_action: Any = None
    reward: float = 0.0  # received on entering this node
    delta: float = 1.0  # feasibility of the incoming transition
    parent: "SearchNode | None" = None
    children: list["SearchNode"] = field(default_factory=list)
    untried: list[Any] = field(default_factory=list)
    q_total: float = 0.0
    visits: int = 0
    rollouts: int = 0  # iterations whose rollout started here

    @property
    def mean(self) -> float:
        return self.q_total / self.visits if self.visits else 0.0

    def fully_expanded(self) -> bool:
        return not self.untried


class MctsEngine:
    """Problem interface (duck-typed):

    actions(state) -> ordered list of actions
    step(state, action) -> (next_state, reward, delta, stopping, terminal)
    rollout(state, rng, max_depth) -> sampled discounted return from state
    is_terminal(state) -> bool
    """

    def __init__(
        self,
        problem,
        config: MctsConfig,
        rng: np.random.Generator,
        root_min_visits: int = 0,
    ):
        self.problem = problem
        self.config = config
        self.rng = rng
        # Visit floor applied at the root only: with sharply unequal subtree
        # depths, tree-improved play evaluates far above raw rollouts, so the
        # first child visited can lock in regardless of its entry reward.
        # Forcing each root child to a minimum count keeps the final
        # argmax-by-visits comparison fair at small iteration budgets.
        self.root_min_visits = root_min_visits

    def select_child(self, node: SearchNode) -> SearchNode:
        """UCT argmax; requires every child visited. Ties keep the first
        (lowest action index) child."""
        if not node.fully_expanded():
            raise PlanningError("select called on a partially expanded node")
        log_n = math.log(node.visits)
        best = None
        best_score = -math.inf
        for child in node.children:
            if child.visits == 0:
                raise PlanningError("select requires every child visited")
            score = child.mean + self.config.exploration * math.sqrt(
                log_n / child.visits
            )
            if score > best_score:
                best = child
                best_score = score
        return best

    def expand(self, node: SearchNode) -> tuple[SearchNode, bool]:
        if not node.untried:
            raise PlanningError("expand called with no untried actions")
        action = node.untried.pop(0)
        state, reward, delta, stopping, terminal = self.problem.step(
            node.state, action
        )
        child = SearchNode(
            state=state,
            incoming_action=action,
            reward=reward,
            delta=delta,
            parent=node,
        )
        # A stopping (communication) child stays a leaf: simulation past it is
        # cut off just like a rollout ends there, so every visit re-estimates
        # it by a fresh rollout instead of growing a subtree.
        child.untried = (
            [] if (terminal or stopping) else list(self.problem.actions(state))
        )
        node.children.append(child)
        return child, stopping

    def backpropagate(self, leaf: SearchNode, rollout_q: float) -> None:
        """Feasibility-weighted backup along the leaf-to-root path.

        Nodes store action values: entering reward plus the discounted blend
        of the child's sample with the node's own running mean. The backup
        formula describes a transition, so the root -- which has no incoming
        edge -- accumulates the blended child sample as-is.
        """
        gamma = self.config.gamma
        node: SearchNode | None = leaf
        q_sample = rollout_q
        delta_child = 1.0
        while node is not None:
            if node.parent is None:
                q_sample = (
                    delta_child * q_sample + (1.0 - delta_child) * node.mean
                )
            else:
                q_sample = propagate_step(
                    node.reward, gamma, delta_child, q_sample, node.mean
                )
            node.q_total += q_sample
            node.visits += 1
            delta_child = node.delta
            node = node.parent

    def search(self, root_state) -> SearchNode:
        root = SearchNode(state=root_state)
        root.untried = list(self.problem.actions(root_state))
        if not root.untried:
            raise PlanningError("no legal actions at the planning root")
        for _ in range(self.config.iterations):
            node = root
            stopping = False
            while not stopping and not self.problem.is_terminal(node.state):
                if node.fully_expanded():
                    if not node.children:
                        break  # terminal by exhaustion
                    if node is root and self.root_min_visits > 0:
                        starved = min(node.children, key=lambda c: c.visits)
                        if starved.visits < self.root_min_visits:
                            node = starved
                            continue
                    node = self.select_child(node)
                else:
                    node, stopping = self.expand(node)
                    break  # one expansion per iteration
            node.rollouts += 1
            q = self.problem.rollout(node.state, self.rng, self.config.max_depth)
            self.backpropagate(node, q)
        return root

    def best_root_action(self, root: SearchNode):
        """Most-visited root child; ties resolved by creation (action) order."""
        best = max(root.children, key=lambda c: c.visits)
        return best.incoming_action


def trace_lines(root: SearchNode) -> list[str]:
    """Tab-separated per-child summary, for debugging and regression snapshots."""
    lines = []
    for child in root.children:
        lines.append(
            f"{child.incoming_action}\t{child.visits}\t{child.mean:.6f}\t{child.delta}"
        )
    return lines
