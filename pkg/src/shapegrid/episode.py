"""Closed-loop episode state machine, trace records, and replay.

An episode walks a current shape toward a target under a step horizon.
Success is an IoU test against the target raster, checked before the
first action (a degenerate scenario terminates at once) and after every
step. The success check always scores the true state; the Static mode
only changes what the agent is shown, never what is simulated.

Every step is recorded (prompt digest, raw agent text, parsed action,
reward, post-state digest), so a trace can be replayed bit-for-bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from . import prompts
from .actions import INVALID_MARKER, ParseFailure, answer_text, apply_label, parse_answer
from .geometry import GridSpec, iou, render_mask
from .rewards import (
    DEFAULT_PROFILE,
    PROFILES,
    RewardProfile,
    RewardTracker,
)
from .scenario import ScenarioSpec
from .shapes import ShapeLibrary, default_library, rasterize, state_digest

SUCCESS = "success"
HORIZON_EXHAUSTED = "horizon_exhausted"
AGENT_ERROR = "agent_error"

MAX_HORIZON = 64


class EpisodeUsageError(RuntimeError):
    """Stepping a terminal episode, or a scenario/config mismatch."""


class ReplayMismatchError(RuntimeError):
    def __init__(self, step: int, field_name: str, expected, actual):
        super().__init__(
            f"replay diverged at step {step}: {field_name} "
            f"expected {expected!r}, got {actual!r}"
        )
        self.step = step
        self.field_name = field_name


@dataclass(frozen=True)
class EpisodeConfig:
    grid: GridSpec
    horizon: int = 5
    iou_threshold: float = 0.9
    mode: str = prompts.DYNAMIC
    profile: RewardProfile = DEFAULT_PROFILE

    def __post_init__(self) -> None:
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise ValueError(f"horizon must be in [1, {MAX_HORIZON}]")
        if not 0 < self.iou_threshold <= 1:
            raise ValueError("iou threshold must be in (0, 1]")
        if self.mode not in prompts.MODES:
            raise ValueError(f"mode must be one of {prompts.MODES}")

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json(),
            "horizon": self.horizon,
            "iou_threshold": self.iou_threshold,
            "mode": self.mode,
            "profile": self.profile.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpisodeConfig":
        profile_obj = obj["profile"]
        name = profile_obj.get("name")
        profile = PROFILES.get(name) or RewardProfile.from_json(profile_obj)
        return cls(
            grid=GridSpec.from_json(obj["grid"]),
            horizon=int(obj["horizon"]),
            iou_threshold=float(obj["iou_threshold"]),
            mode=str(obj["mode"]),
            profile=profile,
        )


@dataclass(frozen=True)
class Observation:
    """What the agent sees before acting at step ``step_index``."""

    target_ascii: str
    current_ascii: str
    history: tuple[str, ...]
    step_index: int


def observation_prompt(observation: Observation, mode: str) -> str:
    """The full prompt text an observation renders to in a mode."""
    return prompts.build_prompt(
        mode,
        observation.target_ascii,
        observation.current_ascii,
        observation.history,
    )


@dataclass(frozen=True)
class StepRecord:
    t: int
    prompt_sha256: str
    raw_text: str
    action: str | None
    failure: str | None
    reward: float
    state_digest: str

    def to_json(self) -> dict:
        return {
            "kind": "step",
            "t": self.t,
            "prompt_sha256": self.prompt_sha256,
            "raw_text": self.raw_text,
            "action": self.action,
            "failure": self.failure,
            "reward": self.reward,
            "state_digest": self.state_digest,
        }


@dataclass
class EpisodeRecord:
    scenario: ScenarioSpec
    config: EpisodeConfig
    seed: int | None
    steps: list[StepRecord]
    outcome: str
    success: bool
    total_reward: float
    final_iou: float

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(s.action for s in self.steps if s.action is not None)

    @property
    def step_rewards(self) -> list[float]:
        return [s.reward for s in self.steps]


@dataclass(frozen=True)
class StepResult:
    observation: Observation | None
    reward: float
    done: bool
    info: dict


class Episode:
    """One closed-loop rollout; strictly sequential, single-owner."""

    def __init__(
        self,
        scenario: ScenarioSpec,
        config: EpisodeConfig,
        library: ShapeLibrary | None = None,
        seed: int | None = None,
    ):
        if scenario.grid != config.grid:
            raise EpisodeUsageError(
                f"scenario grid {scenario.grid} does not match config grid {config.grid}"
            )
        self.scenario = scenario
        self.config = config
        self.library = library or default_library()
        self.seed = seed
        self.state = scenario.start
        self.t = 0
        self.history: list[str] = []
        self.tracker = RewardTracker(scenario.plan, config.profile)
        self.steps: list[StepRecord] = []
        self._target_mask = rasterize(scenario.target, config.grid, self.library)
        self._target_ascii = render_mask(self._target_mask)
        self._initial_ascii = render_mask(
            rasterize(scenario.start, config.grid, self.library)
        )
        self.done = False
        self.outcome: str | None = None
        self.success = False
        # Success may hold before any action (minimal timestep can be zero).
        if self.current_iou() >= config.iou_threshold:
            self.done = True
            self.success = True
            self.outcome = SUCCESS

    def current_iou(self) -> float:
        return iou(
            rasterize(self.state, self.config.grid, self.library), self._target_mask
        )

    def observation(self) -> Observation:
        if self.config.mode == prompts.STATIC:
            current = self._initial_ascii
        else:
            current = render_mask(rasterize(self.state, self.config.grid, self.library))
        return Observation(
            target_ascii=self._target_ascii,
            current_ascii=current,
            history=tuple(self.history),
            step_index=self.t + 1,
        )

    def prompt(self) -> str:
        return observation_prompt(self.observation(), self.config.mode)

    def step_text(self, raw_text: str) -> StepResult:
        """Consume one step of raw agent text (the parser runs here)."""
        if self.done:
            raise EpisodeUsageError("episode is already terminal")
        prompt_hash = hashlib.sha256(self.prompt().encode("utf-8")).hexdigest()
        parsed = parse_answer(raw_text)
        if isinstance(parsed, ParseFailure):
            action, failure = None, parsed.value
            reward = self.tracker.on_parse_failure()
            self.history.append(INVALID_MARKER)
        else:
            action, failure = parsed, None
            self.state, _ = apply_label(
                self.state, parsed, self.config.grid, self.library
            )
            reward = self.tracker.on_action(parsed)
            self.history.append(parsed)
        self.t += 1
        iou_now = self.current_iou()
        if iou_now >= self.config.iou_threshold:
            self.done = True
            self.success = True
            self.outcome = SUCCESS
        elif self.t >= self.config.horizon:
            self.done = True
            self.outcome = HORIZON_EXHAUSTED
        self.steps.append(
            StepRecord(
                t=self.t,
                prompt_sha256=prompt_hash,
                raw_text=raw_text,
                action=action,
                failure=failure,
                reward=reward,
                state_digest=state_digest(self.state),
            )
        )
        info = {"iou": iou_now, "step": self.t, "outcome": self.outcome}
        return StepResult(
            observation=None if self.done else self.observation(),
            reward=reward,
            done=self.done,
            info=info,
        )

    def step_label(self, label: str) -> StepResult:
        return self.step_text(answer_text(label))

    def abort(self, outcome: str) -> None:
        self.done = True
        self.outcome = outcome

    def record(self) -> EpisodeRecord:
        if not self.done:
            raise EpisodeUsageError("episode is not terminal yet")
        return EpisodeRecord(
            scenario=self.scenario,
            config=self.config,
            seed=self.seed,
            steps=list(self.steps),
            outcome=self.outcome,
            success=self.success,
            total_reward=self.tracker.total(self.success),
            final_iou=self.current_iou(),
        )


class AgentChannelError(RuntimeError):
    """The agent transport failed; the episode ends as an agent error."""


def run_episode(
    scenario: ScenarioSpec,
    config: EpisodeConfig,
    agent,
    library: ShapeLibrary | None = None,
    seed: int | None = None,
) -> EpisodeRecord:
    """Drive one episode with an agent (anything with act(prompt, step))."""
    episode = Episode(scenario, config, library=library, seed=seed)
    begin = getattr(agent, "begin", None)
    if begin is not None:
        begin(episode)
    while not episode.done:
        try:
            text = agent.act(episode.prompt(), episode.t + 1)
        except AgentChannelError:
            episode.abort(AGENT_ERROR)
            break
        episode.step_text(text if text is not None else "")
    return episode.record()


def replay(record: EpisodeRecord, library: ShapeLibrary | None = None) -> EpisodeRecord:
    """Re-execute a trace and verify it reproduces bit-identically."""
    episode = Episode(record.scenario, record.config, library=library, seed=record.seed)
    for step in record.steps:
        if episode.done:
            raise ReplayMismatchError(step.t, "done", False, True)
        result_hash = hashlib.sha256(episode.prompt().encode("utf-8")).hexdigest()
        if result_hash != step.prompt_sha256:
            raise ReplayMismatchError(step.t, "prompt_sha256", step.prompt_sha256, result_hash)
        episode.step_text(step.raw_text)
        redone = episode.steps[-1]
        for field_name in ("action", "failure", "reward", "state_digest"):
            expected = getattr(step, field_name)
            actual = getattr(redone, field_name)
            if expected != actual:
                raise ReplayMismatchError(step.t, field_name, expected, actual)
    if record.outcome != AGENT_ERROR:
        if not episode.done:
            raise ReplayMismatchError(len(record.steps), "done", True, False)
        if episode.outcome != record.outcome:
            raise ReplayMismatchError(
                len(record.steps), "outcome", record.outcome, episode.outcome
            )
    regenerated = EpisodeRecord(
        scenario=record.scenario,
        config=record.config,
        seed=record.seed,
        steps=list(episode.steps),
        outcome=record.outcome,
        success=episode.success,
        total_reward=episode.tracker.total(episode.success),
        final_iou=episode.current_iou(),
    )
    if regenerated.total_reward != record.total_reward:
        raise ReplayMismatchError(
            len(record.steps), "total_reward", record.total_reward,
            regenerated.total_reward,
        )
    return regenerated


def write_trace(record: EpisodeRecord, path: Path, library: ShapeLibrary | None = None) -> None:
    """Write a JSON-lines trace: header, one line per step, end line."""
    from . import __version__

    header = {
        "kind": "header",
        "tool": "shapegrid",
        "version": __version__,
        "scenario": record.scenario.to_json(library=library),
        "config": record.config.to_json(),
        "seed": record.seed,
        "reward_profile": record.config.profile.name,
    }
    end = {
        "kind": "end",
        "outcome": record.outcome,
        "success": record.success,
        "total_reward": record.total_reward,
        "final_iou": record.final_iou,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for step in record.steps:
            fh.write(json.dumps(step.to_json(), sort_keys=True) + "\n")
        fh.write(json.dumps(end, sort_keys=True) + "\n")


def read_trace(path: Path) -> EpisodeRecord:
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "header" or lines[-1].get("kind") != "end":
        raise ValueError(f"{path}: not a trace file (missing header/end lines)")
    header, end = lines[0], lines[-1]
    steps = [
        StepRecord(
            t=int(obj["t"]),
            prompt_sha256=str(obj["prompt_sha256"]),
            raw_text=str(obj["raw_text"]),
            action=obj["action"],
            failure=obj["failure"],
            reward=float(obj["reward"]),
            state_digest=str(obj["state_digest"]),
        )
        for obj in lines[1:-1]
    ]
    return EpisodeRecord(
        scenario=ScenarioSpec.from_json(header["scenario"]),
        config=EpisodeConfig.from_json(header["config"]),
        seed=header.get("seed"),
        steps=steps,
        outcome=str(end["outcome"]),
        success=bool(end["success"]),
        total_reward=float(end["total_reward"]),
        final_iou=float(end["final_iou"]),
    )
