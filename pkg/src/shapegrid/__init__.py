"""shapegrid: deterministic ASCII-grid shape-transformation puzzles.

A simulation engine, reward harness, dataset synthesizer, and evaluation
toolkit for tasks where an agent rotates, translates, and scales a shape
on a bounded grid to match a target configuration.
"""

__version__ = "0.1.0"

from .actions import (
    ALL_LABELS,
    EFFECTIVE_LABELS,
    NOOP_LABELS,
    ParseFailure,
    parse_answer,
)
from .episode import (
    Episode,
    EpisodeConfig,
    EpisodeRecord,
    Observation,
    replay,
    run_episode,
)
from .geometry import DEFAULT_GRID, GridSpec, iou, parse_mask, render_mask
from .generate import gen_building_block, gen_dataset, gen_scenario, gen_suite
from .rewards import (
    PROFILES,
    QuotaPlan,
    RewardProfile,
    derive_quota_plan,
    episode_total,
    max_reward,
    step_reward,
)
from .scenario import ScenarioSpec, validate_scenario
from .shapes import ShapeLibrary, ShapeState, default_library, render_state

__all__ = [
    "__version__",
    "ALL_LABELS",
    "EFFECTIVE_LABELS",
    "NOOP_LABELS",
    "ParseFailure",
    "parse_answer",
    "Episode",
    "EpisodeConfig",
    "EpisodeRecord",
    "Observation",
    "replay",
    "run_episode",
    "DEFAULT_GRID",
    "GridSpec",
    "iou",
    "parse_mask",
    "render_mask",
    "gen_building_block",
    "gen_dataset",
    "gen_scenario",
    "gen_suite",
    "PROFILES",
    "QuotaPlan",
    "RewardProfile",
    "derive_quota_plan",
    "episode_total",
    "max_reward",
    "step_reward",
    "ScenarioSpec",
    "validate_scenario",
    "ShapeLibrary",
    "ShapeState",
    "default_library",
    "render_state",
]
