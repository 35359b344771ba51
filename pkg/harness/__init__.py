from .episode_log import EPISODE_COLUMNS, EpisodeLog
from .evaluation import ResetEvent, evaluate_episode, make_reset_schedule, performance_score
from .benchmark import (
    REFERENCE_SCORES,
    BenchmarkEntry,
    BenchmarkResult,
    learning_curve_data,
    rollout_figure_data,
    run_benchmark,
)

__all__ = [
    "EPISODE_COLUMNS",
    "EpisodeLog",
    "ResetEvent",
    "evaluate_episode",
    "make_reset_schedule",
    "performance_score",
    "REFERENCE_SCORES",
    "BenchmarkEntry",
    "BenchmarkResult",
    "learning_curve_data",
    "rollout_figure_data",
    "run_benchmark",
]
