from .mcts import MctsConfig, MctsEngine, SearchNode
from .navigation import NavigationProblem, plan
from .rewards import RewardConfig, comm_cost, propagate_step, r_env, r_guidance, r_smooth

__all__ = [
    "MctsConfig",
    "MctsEngine",
    "SearchNode",
    "NavigationProblem",
    "plan",
    "RewardConfig",
    "r_env",
    "r_guidance",
    "r_smooth",
    "comm_cost",
    "propagate_step",
]
