"""Multi-seed experiment runs with aggregate reporting."""

from __future__ import annotations

import json
from dataclasses import asdict, replace

import numpy as np

from .episode import EpisodeConfig, EpisodeMetrics, run_episode

AGGREGATE_FIELDS = (
    "steps",
    "images",
    "guidance_instances",
    "volume_mb",
    "final_accuracy",
    "goals_claimed",
)


def run_suite(template: EpisodeConfig, seeds) -> dict:
    """One episode per seed; per-seed metrics plus mean and std per field."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    episodes: list[EpisodeMetrics] = []
    for seed in seeds:
        config = replace(template, maze_seed=seed)
        metrics = run_episode(config, np.random.default_rng(seed))
        episodes.append(metrics)
    aggregate = {}
    for name in AGGREGATE_FIELDS:
        values = np.array([getattr(m, name) for m in episodes], dtype=np.float64)
        aggregate[name] = {
            "mean": float(values.mean()),
            "std": float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        }
    aggregate["completed"] = sum(0 if m.incomplete else 1 for m in episodes)
    return {
        "v": 1,
        "policy": template.policy,
        "seeds": seeds,
        "episodes": [
            {k: v for k, v in asdict(m).items() if k != "turns"} for m in episodes
        ],
        "aggregate": aggregate,
    }


def report_text(report: dict) -> str:
    """Aligned text table: one row per metric, mean +/- std."""
    lines = [
        f"policy: {report['policy']}   seeds: {len(report['seeds'])}   "
        f"completed: {report['aggregate']['completed']}/{len(report['seeds'])}",
        f"{'metric':<20}{'mean':>12}{'std':>12}",
    ]
    for name in AGGREGATE_FIELDS:
        entry = report["aggregate"][name]
        lines.append(f"{name:<20}{entry['mean']:>12.3f}{entry['std']:>12.3f}")
    return "\n".join(lines) + "\n"


def save_report(report: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
