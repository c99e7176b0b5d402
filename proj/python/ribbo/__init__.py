"""Offline-trained sequence models for black-box optimization."""

import json as _json

from . import _core
from ._core import (
    RibboError,
    Task,
    augment_rtg,
    behaviors,
    checkpoint_info,
    cumulative_regret,
    eval,
    expected_improvement,
    generate_data,
    plot_data,
    run_behavior,
    train,
)

__all__ = [
    "RibboError",
    "Task",
    "augment_rtg",
    "behaviors",
    "checkpoint_info",
    "cumulative_regret",
    "eval",
    "expected_improvement",
    "generate_data",
    "plot_data",
    "run",
    "run_behavior",
    "sample_task",
    "train",
]


def _dist_json(distribution):
    return distribution if isinstance(distribution, str) else _json.dumps(distribution)


def sample_task(distribution, index):
    """Task `index` of a distribution given as a dict or JSON string."""
    return _core.sample_task(_dist_json(distribution), index)


def run(ckpt, distribution, index, budget=60, strategy="hrr", mode="stochastic", seed=0):
    """Optimizes one task with a trained checkpoint; returns xs, ys, rtgs and mean_std."""
    return _core.run(str(ckpt), _dist_json(distribution), index, budget, strategy, mode, seed)
