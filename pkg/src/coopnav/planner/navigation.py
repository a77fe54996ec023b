"""Binding of the search engine to the maze world.

Tree states carry the path since the last communication, the operator-map
estimate, and the goals claimed along the branch. Movement consults only the
robot's knowledge grid: known walls block; unknown cells are entered at
feasibility 0.5 during expansion and resolved by a fair coin in rollouts.
Communication children fold the perception model's most likely edit into the
map estimate and terminate the descent for that iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..belief import BeliefMap, EditMask, apply_edit, expected_info_gain
from ..geometry import Cell, first_blocker, in_cone
from ..grid import (
    ALL_ACTIONS,
    DEFAULT_CAMERA_RANGE,
    DEFAULT_FOV_DEG,
    DIR_VECTORS,
    DIRECTIONS,
    UNKNOWN,
    WALL,
    Action,
    KnowledgeGrid,
    Observation,
    RobotPose,
)
from .mcts import MctsConfig, MctsEngine, trace_lines
from .rewards import RewardConfig, comm_cost, r_env, r_guidance, r_smooth


@dataclass(frozen=True)
class NavState:
    tau: tuple[Cell, ...]
    belief: BeliefMap
    claimed: frozenset[Cell] = field(default_factory=frozenset)

    @property
    def cell(self) -> Cell:
        return self.tau[-1]


def synthesize_observation(
    knowledge: KnowledgeGrid,
    cell: Cell,
    direction: str,
    fov_deg: float = DEFAULT_FOV_DEG,
    max_range: int = DEFAULT_CAMERA_RANGE,
) -> Observation:
    """The transmission the robot can promise from here: known cells in the
    cone, occluded by known walls only (it cannot preview unknown content)."""
    labels = knowledge.labels
    height, width = labels.shape
    heading = DIR_VECTORS[direction]

    def known_wall(c: Cell) -> bool:
        return 0 <= c[0] < height and 0 <= c[1] < width and labels[c] == WALL

    visible: list[Cell] = []
    walls: list[bool] = []
    range_sq = max_range * max_range
    for r in range(max(0, cell[0] - max_range), min(height, cell[0] + max_range + 1)):
        for c in range(max(0, cell[1] - max_range), min(width, cell[1] + max_range + 1)):
            target = (r, c)
            if target == cell:
                continue
            dr, dc = r - cell[0], c - cell[1]
            if dr * dr + dc * dc > range_sq:
                continue
            if labels[target] == UNKNOWN:
                continue
            if not in_cone(cell, target, heading, fov_deg):
                continue
            if first_blocker(cell, target, known_wall) is None:
                visible.append(target)
                walls.append(labels[target] == WALL)
    return Observation(
        camera=RobotPose(cell, direction), visible=tuple(visible), walls=tuple(walls)
    )


class NavigationProblem:
    """One planning invocation's world view; owns per-call model caches."""

    def __init__(
        self,
        knowledge: KnowledgeGrid,
        goals,
        model,
        guidance_cells,
        visited_episode,
        reward_config: RewardConfig | None = None,
        gamma: float = 0.99,
        fov_deg: float = DEFAULT_FOV_DEG,
        camera_range: int = DEFAULT_CAMERA_RANGE,
        include_comm_actions: bool = True,
        belief_prior: BeliefMap | None = None,
    ):
        self.include_comm_actions = include_comm_actions
        self.belief_prior = belief_prior
        self.knowledge = knowledge
        self.goals = frozenset(goals)
        self.model = model
        self.zeta = frozenset(guidance_cells)
        # Successor along the suggested path, for the rail-following part of
        # the rollout policy.
        self.zeta_next = {
            a: b for a, b in zip(guidance_cells, list(guidance_cells)[1:])
        }
        self.visited_episode = frozenset(visited_episode)
        self.rewards = reward_config or RewardConfig()
        self.gamma = gamma
        self.fov_deg = fov_deg
        self.camera_range = camera_range
        self._gain_cache: dict = {}
        # knowledge is frozen for the whole call: plain-python label rows and
        # per-cell legal-move lists keep the rollout loop off numpy scalars
        self._label_rows: list[list[int]] = knowledge.labels.tolist()
        self._moves_cache: dict[Cell, list] = {}
        self._route_next: dict[Cell, Cell] = {}
        self._field_cache: dict[frozenset, dict[Cell, float]] = {}

    def _entry_cost(self, cell: Cell) -> float:
        rows = self._label_rows
        if not (0 <= cell[0] < len(rows) and 0 <= cell[1] < len(rows[0])):
            return float("inf")
        label = rows[cell[0]][cell[1]]
        if label == WALL:
            return float("inf")
        if label == UNKNOWN:
            prior = self.belief_prior
            if prior is not None and prior.is_wall(cell):
                return 6.0
            return 2.0
        return 1.0

    def _field_for(self, unclaimed: frozenset) -> dict[Cell, float]:
        """Expected travel cost to the nearest of `unclaimed` over the
        knowledge-plus-operator-prior cost model; one field per remaining
        goal set (rollouts below an in-tree goal claim must not be herded
        back toward the goal just claimed)."""
        field = self._field_cache.get(unclaimed)
        if field is not None:
            return field
        import heapq

        rows = self._label_rows
        height, width = len(rows), len(rows[0]) if rows else 0
        dist: dict[Cell, float] = {}
        heap = []
        for goal in unclaimed:
            if self._entry_cost(goal) != float("inf"):
                dist[goal] = 0.0
                heap.append((0.0, goal))
        heapq.heapify(heap)
        while heap:
            cost, (r, c) = heapq.heappop(heap)
            if cost > dist.get((r, c), float("inf")):
                continue
            for dr, dc in DIR_VECTORS.values():
                nb = (r + dr, c + dc)
                if not (0 <= nb[0] < height and 0 <= nb[1] < width):
                    continue
                step = self._entry_cost(nb)
                if step == float("inf"):
                    continue
                nd = cost + step
                if nd < dist.get(nb, float("inf")):
                    dist[nb] = nd
                    heapq.heappush(heap, (nd, nb))
        self._field_cache[unclaimed] = dist
        return dist

    def plan_route(self, origin: Cell) -> None:
        """Best current route from origin to the nearest goal (operator map
        amended by robot knowledge, suspect cells at a premium), used by the
        executor to stabilize near-tie decisions."""
        field = self._field_for(frozenset(self.goals))
        self._route_next = {}
        cell = origin
        seen = {origin}
        while cell not in self.goals:
            options = []
            for dr, dc in DIR_VECTORS.values():
                nb = (cell[0] + dr, cell[1] + dc)
                if nb in field and nb not in seen:
                    options.append((field[nb], nb))
            if not options:
                break
            options.sort()
            nxt = options[0][1]
            self._route_next[cell] = nxt
            seen.add(nxt)
            cell = nxt

    def unclaimed(self, state: NavState):
        return self.goals - state.claimed

    def is_terminal(self, state: NavState) -> bool:
        return not self.unclaimed(state)

    def actions(self, state: NavState):
        """Movements not aimed at a knowledge-confirmed wall, then the four
        camera directions. All four movements reappear when fully boxed in."""
        moves = [
            Action.move(d)
            for d in DIRECTIONS
            if self._move_target(state.cell, d)[1] != WALL
        ]
        if not moves:
            moves = [Action.move(d) for d in DIRECTIONS]
        if self.include_comm_actions:
            moves = moves + [Action.communicate(d) for d in DIRECTIONS]
        return moves

    def _task_reward(self, tau, last: Cell, unclaimed) -> float:
        counts: dict = {}
        for cell in tau[:-1]:
            counts[cell] = counts.get(cell, 0) + 1
        return (
            r_env(last, unclaimed, self.rewards)
            + r_guidance(last, self.zeta, len(tau))
            + r_smooth(counts, last)
        )

    def _move_target(self, cell: Cell, direction: str) -> tuple[Cell, int]:
        dr, dc = DIR_VECTORS[direction]
        target = (cell[0] + dr, cell[1] + dc)
        rows = self._label_rows
        if not (0 <= target[0] < len(rows) and 0 <= target[1] < len(rows[0])):
            return cell, WALL
        return target, rows[target[0]][target[1]]

    def _legal_moves(self, cell: Cell) -> list:
        moves = self._moves_cache.get(cell)
        if moves is None:
            moves = []
            for direction in DIRECTIONS:
                target, label = self._move_target(cell, direction)
                if target != cell and label != WALL:
                    moves.append((target, label))
            self._moves_cache[cell] = moves
        return moves

    def _model_gain(self, belief: BeliefMap, tau, cell: Cell, direction: str):
        key = (belief.walls.tobytes(), cell, direction)
        hit = self._gain_cache.get(key)
        if hit is not None:
            return hit
        obs = synthesize_observation(
            self.knowledge, cell, direction, self.fov_deg, self.camera_range
        )
        probs = self.model.predict_probs(belief, tau, obs)
        result = (expected_info_gain(probs), probs)
        self._gain_cache[key] = result
        return result

    # -- engine interface ----------------------------------------------------
    def step(self, state: NavState, action: Action):
        unclaimed = self.unclaimed(state)
        if action.kind == "move":
            target, label = self._move_target(state.cell, action.direction)
            delta = 1.0
            if label == WALL:
                target = state.cell  # blocked: stay put, still pay the step
            elif label == UNKNOWN:
                delta = 0.5
            tau = state.tau + (target,)
            reward = self._task_reward(tau, target, unclaimed)
            claimed = state.claimed
            if target in unclaimed:
                claimed = claimed | {target}
            nxt = NavState(tau=tau, belief=state.belief, claimed=claimed)
            return nxt, reward, delta, False, self.is_terminal(nxt)

        gain, probs = self._model_gain(
            state.belief, state.tau, state.cell, action.direction
        )
        # Most-likely edit keeps the child's map estimate deterministic; the
        # reward still uses the analytic expectation.
        edit = EditMask(add=probs.p_add >= 0.5, remove=probs.p_remove >= 0.5)
        belief = apply_edit(state.belief, edit)
        cost = comm_cost(
            self.zeta, self.visited_episode | set(state.tau), self.rewards
        )
        reward = self._task_reward(state.tau, state.cell, unclaimed) + gain - cost
        # tau is the history since the last communication by definition, so a
        # communication child starts a fresh one (mirroring execution, where
        # the revisit and off-path penalties restart after a transmission).
        nxt = NavState(
            tau=(state.cell,), belief=belief, claimed=state.claimed
        )
        return nxt, reward, 1.0, True, self.is_terminal(nxt)

    # Per-step chance that a simulated turn is a communication. Sampling it
    # uniformly against the 2-4 legal moves would terminate rollouts after
    # ~4 steps and blind the search past that horizon (measured: episodes
    # trap in corners for hundreds of steps); a small fixed rate keeps the
    # early-termination semantics while letting simulations actually travel.
    rollout_comm_prob = 0.05
    # Rollout default policy: mostly descend the travel-cost field toward the
    # nearest remaining goal, uniform random otherwise. Fully uniform walks
    # make the per-rollout return variance dwarf the per-action reward
    # differences at these iteration budgets, and walks with no pull toward
    # the remaining goals self-poison on the revisit penalty in dead ends.
    rollout_field_prob = 0.9

    def rollout(
        self, state: NavState, rng: np.random.Generator, max_depth: int
    ) -> float:
        if self.is_terminal(state):
            return 0.0
        tau = list(state.tau)
        counts: dict = {}
        for cell in tau[:-1]:
            counts[cell] = counts.get(cell, 0) + 1
        unclaimed = set(self.unclaimed(state))
        field = self._field_for(frozenset(unclaimed))
        visited = set(self.visited_episode) | set(tau)
        cell = state.cell
        q = 0.0
        discount = 1.0
        for _ in range(max_depth):
            moves = self._legal_moves(cell)
            take_comm = rng.random() < self.rollout_comm_prob or not moves
            if take_comm:
                # communication candidate at one uniformly drawn camera angle
                direction = DIRECTIONS[int(rng.integers(4))]
                gain, _ = self._model_gain(state.belief, tuple(tau), cell, direction)
                cost = comm_cost(self.zeta, visited, self.rewards)
                reward = (
                    r_env(cell, unclaimed, self.rewards)
                    + r_guidance(cell, self.zeta, len(tau))
                    - counts.get(cell, 0)
                    + gain
                    - cost
                )
                q += discount * reward
                break
            if rng.random() < self.rollout_field_prob:
                best = min(field.get(m[0], float("inf")) for m in moves)
                ties = [m for m in moves if field.get(m[0], float("inf")) == best]
                target, label = ties[int(rng.integers(len(ties)))]
            else:
                target, label = moves[int(rng.integers(len(moves)))]
            if label == UNKNOWN and rng.random() < 0.5:
                target = cell  # sampled a wall: the move fails in place
            counts[tau[-1]] = counts.get(tau[-1], 0) + 1
            tau.append(target)
            visited.add(target)
            reward = (
                r_env(target, unclaimed, self.rewards)
                + r_guidance(target, self.zeta, len(tau))
                - counts.get(target, 0)
            )
            q += discount * reward
            cell = target
            if target in unclaimed:
                break  # early termination on reaching a goal
            discount *= self.gamma
        return q


def plan(
    tau0,
    belief: BeliefMap,
    knowledge: KnowledgeGrid,
    goals,
    model,
    guidance_cells,
    visited_episode,
    rng: np.random.Generator,
    mcts_config: MctsConfig | None = None,
    reward_config: RewardConfig | None = None,
    claimed=(),
    fov_deg: float = DEFAULT_FOV_DEG,
    camera_range: int = DEFAULT_CAMERA_RANGE,
    root_min_visits: int = 0,
    include_comm_actions: bool = True,
) -> tuple[Action, list[str]]:
    """One planning turn: returns the chosen action and a per-child trace."""
    action, root, _ = plan_root(
        tau0,
        belief,
        knowledge,
        goals,
        model,
        guidance_cells,
        visited_episode,
        rng,
        mcts_config,
        reward_config,
        claimed,
        fov_deg,
        camera_range,
        root_min_visits,
        include_comm_actions,
    )
    return action, trace_lines(root)


def plan_root(
    tau0,
    belief: BeliefMap,
    knowledge: KnowledgeGrid,
    goals,
    model,
    guidance_cells,
    visited_episode,
    rng: np.random.Generator,
    mcts_config: MctsConfig | None = None,
    reward_config: RewardConfig | None = None,
    claimed=(),
    fov_deg: float = DEFAULT_FOV_DEG,
    camera_range: int = DEFAULT_CAMERA_RANGE,
    root_min_visits: int = 0,
    include_comm_actions: bool = True,
):
    """plan(), but also exposing the searched root and the problem binding."""
    config = mcts_config or MctsConfig()
    problem = NavigationProblem(
        knowledge,
        set(goals) - set(claimed),
        model,
        guidance_cells,
        visited_episode,
        reward_config,
        gamma=config.gamma,
        fov_deg=fov_deg,
        camera_range=camera_range,
        include_comm_actions=include_comm_actions,
        belief_prior=belief,
    )
    problem.plan_route(tuple(tau0)[-1])
    engine = MctsEngine(problem, config, rng, root_min_visits=root_min_visits)
    root_state = NavState(tau=tuple(tau0), belief=belief)
    root = engine.search(root_state)
    return engine.best_root_action(root), root, problem


def best_communication(
    belief: BeliefMap,
    tau,
    knowledge: KnowledgeGrid,
    model,
    guidance_cells,
    visited_episode,
    reward_config: RewardConfig | None = None,
    fov_deg: float = DEFAULT_FOV_DEG,
    camera_range: int = DEFAULT_CAMERA_RANGE,
    goals=(),
    claimed=(),
    gamma: float = 0.99,
    samples: int = 16,
    seed: int = 0,
) -> tuple[Action | None, float]:
    """Executed-communication rule: transmit at the gain-maximizing angle
    when doing so beats carrying on, estimated by paired rollouts.

    The comparison covers both of communication's payoffs: the expected map
    change itself (minus the 10+n cost) and the restart of the off-path and
    revisit penalty windows, which the reward design deliberately couples to
    transmissions. Common random numbers keep the paired estimate tight.
    """
    problem = NavigationProblem(
        knowledge,
        set(goals) - set(claimed),
        model,
        guidance_cells,
        visited_episode,
        reward_config,
        gamma=gamma,
        fov_deg=fov_deg,
        camera_range=camera_range,
        belief_prior=belief,
    )
    tau = tuple(tau)
    cell = tau[-1]
    problem.plan_route(cell)
    state = NavState(tau=tau, belief=belief)
    if problem.is_terminal(state):
        return None, 0.0

    best_dir = None
    best_gain = 0.0
    best_probs = None
    for direction in DIRECTIONS:
        gain, probs = problem._model_gain(belief, tau, cell, direction)
        if gain > best_gain:
            best_dir, best_gain, best_probs = direction, gain, probs
    if best_dir is None:
        best_dir = DIRECTIONS[0]
        best_gain, best_probs = problem._model_gain(belief, tau, cell, best_dir)

    cost = comm_cost(guidance_cells, set(visited_episode) | set(tau), problem.rewards)
    edit = EditMask(add=best_probs.p_add >= 0.5, remove=best_probs.p_remove >= 0.5)
    comm_state = NavState(
        tau=(cell,), belief=apply_edit(belief, edit), claimed=state.claimed
    )
    entry = problem._task_reward(tau, cell, problem.unclaimed(state))
    v_stay = 0.0
    v_comm = 0.0
    for i in range(samples):
        v_stay += problem.rollout(state, np.random.default_rng(seed + i), 100)
        v_comm += problem.rollout(comm_state, np.random.default_rng(seed + i), 100)
    v_stay /= samples
    v_comm /= samples
    margin = (entry + best_gain - cost + gamma * v_comm) - v_stay
    if margin > 0:
        return Action.communicate(best_dir), margin
    return None, margin
