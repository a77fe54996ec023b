from .episode import (
    EpisodeConfig,
    EpisodeMetrics,
    ReplayHuman,
    SyntheticHuman,
    SynthProbabilityModel,
    run_episode,
)
from .suite import run_suite

__all__ = [
    "EpisodeConfig",
    "EpisodeMetrics",
    "run_episode",
    "run_suite",
    "SyntheticHuman",
    "ReplayHuman",
    "SynthProbabilityModel",
]
