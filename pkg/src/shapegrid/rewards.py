"""Ground-truth quota plans and the episode reward arithmetic.

A quota plan is the multiset of atomic action labels that greedily
transforms the start state into the target; its size is the task distance
(position delta + scale delta + rotation delta). Correctness credit is
normalized per operation type: fully executing a type is worth the same
total no matter how many atomic actions it takes, which removes bias
toward translation-heavy tasks.

Two penalty conventions ship:

* ``figure2`` (default) nets the shortness penalty into the per-action
  credit, so each fully executed type contributes 0.9 and a five-action
  three-type episode totals 2.7 (4.7 with the success bonus).
* ``eq5-literal`` keeps the credit at 1 per type and charges the 0.1
  shortness penalty on every step taken; the same episode totals 2.5.

Both charge ``invalid_penalty`` for any step that does not consume quota
and 0.2 for each selection of one label beyond the second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import actions
from .shapes import DOWN, LEFT, RIGHT, UP, ShapeState

PER_TYPE = "per-type"
PER_STEP = "per-step"


class PlanError(ValueError):
    """Quota plans require two states of the same shape."""


@dataclass(frozen=True)
class QuotaPlan:
    """Required count per action label; distance is the total count."""

    quotas: Mapping[str, int]

    def __post_init__(self) -> None:
        for label, count in self.quotas.items():
            if label not in actions.EFFECTIVE_LABELS:
                raise PlanError(f"label {label!r} cannot appear in a quota plan")
            if count <= 0:
                raise PlanError(f"quota for {label!r} must be positive")

    @property
    def distance(self) -> int:
        return sum(self.quotas.values())

    def type_total(self, kind: str) -> int:
        return sum(
            count
            for label, count in self.quotas.items()
            if actions.LABEL_TYPE[label] == kind
        )

    def types_present(self) -> tuple[str, ...]:
        present = {actions.LABEL_TYPE[label] for label in self.quotas}
        return tuple(k for k in (actions.ROT, actions.TRANS, actions.SCALE) if k in present)

    def to_json(self) -> dict:
        return {"quotas": dict(sorted(self.quotas.items())), "distance": self.distance}

    @classmethod
    def from_json(cls, obj: dict) -> "QuotaPlan":
        return cls(quotas={str(k): int(v) for k, v in obj["quotas"].items()})


def minimal_rotation_steps(delta: int) -> tuple[int, int]:
    """Fewest (quarter, slight) CCW turns realizing an orientation delta."""
    delta %= 360
    best: tuple[int, int] | None = None
    for quarters in range(8):
        for slights in range(8):
            if (90 * quarters + 45 * slights) % 360 == delta:
                if best is None or quarters + slights < sum(best):
                    best = (quarters, slights)
    assert best is not None
    return best


def derive_quota_plan(start: ShapeState, target: ShapeState) -> QuotaPlan:
    """Greedy atomic-action multiset taking start to target."""
    if start.shape_id != target.shape_id:
        raise PlanError(
            f"states use different shapes: {start.shape_id!r} vs {target.shape_id!r}"
        )
    quotas: dict[str, int] = {}

    quarters, slights = minimal_rotation_steps(target.orientation - start.orientation)
    if quarters:
        quotas[actions.QUARTER_ROTATION] = quarters
    if slights:
        quotas[actions.SLIGHT_ROTATION] = slights

    scale_delta = target.scale - start.scale
    if scale_delta > 0:
        quotas[actions.DOUBLE_SIZE] = scale_delta
    elif scale_delta < 0:
        quotas[actions.HALF_SIZE] = -scale_delta

    dcol = target.col - start.col
    drow = target.row - start.row
    if dcol > 0:
        quotas[RIGHT] = dcol
    elif dcol < 0:
        quotas[LEFT] = -dcol
    if drow > 0:
        quotas[DOWN] = drow
    elif drow < 0:
        quotas[UP] = -drow

    return QuotaPlan(quotas=quotas)


@dataclass(frozen=True)
class RewardProfile:
    """All reward constants plus the shortness-penalty convention."""

    name: str
    per_step_penalty: float = 0.1
    repetition_penalty: float = 0.2
    repetition_threshold: int = 2
    success_bonus: float = 2.0
    invalid_penalty: float = 0.1
    penalty_convention: str = PER_TYPE

    def __post_init__(self) -> None:
        if self.penalty_convention not in (PER_TYPE, PER_STEP):
            raise ValueError(f"unknown penalty convention {self.penalty_convention!r}")
        for attr in ("per_step_penalty", "repetition_penalty", "success_bonus",
                     "invalid_penalty"):
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be non-negative")

    def correctness_unit(self, plan: QuotaPlan, label: str) -> float:
        """Credit for one quota-respecting use of ``label`` under this plan."""
        total = plan.type_total(actions.LABEL_TYPE[label])
        if self.penalty_convention == PER_TYPE:
            return (1.0 - self.per_step_penalty) / total
        return 1.0 / total

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "per_step_penalty": self.per_step_penalty,
            "repetition_penalty": self.repetition_penalty,
            "repetition_threshold": self.repetition_threshold,
            "success_bonus": self.success_bonus,
            "invalid_penalty": self.invalid_penalty,
            "penalty_convention": self.penalty_convention,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RewardProfile":
        return cls(
            name=str(obj.get("name", "custom")),
            per_step_penalty=float(obj.get("per_step_penalty", 0.1)),
            repetition_penalty=float(obj.get("repetition_penalty", 0.2)),
            repetition_threshold=int(obj.get("repetition_threshold", 2)),
            success_bonus=float(obj.get("success_bonus", 2.0)),
            invalid_penalty=float(obj.get("invalid_penalty", 0.1)),
            penalty_convention=str(obj.get("penalty_convention", PER_TYPE)),
        )


FIGURE2 = RewardProfile(name="figure2", penalty_convention=PER_TYPE)
EQ5_LITERAL = RewardProfile(name="eq5-literal", penalty_convention=PER_STEP)

PROFILES = {FIGURE2.name: FIGURE2, EQ5_LITERAL.name: EQ5_LITERAL}
DEFAULT_PROFILE = FIGURE2


def profile_by_name(name: str) -> RewardProfile:
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(
            f"unknown reward profile {name!r}; known: {', '.join(sorted(PROFILES))}"
        ) from None


def step_reward(
    action: str,
    plan: QuotaPlan,
    profile: RewardProfile,
    prior_counts: Mapping[str, int],
) -> float:
    """Reward for selecting ``action`` after ``prior_counts`` selections.

    Counts are per-label selection totals for the episode so far (they feed
    both the quota check and the repetition rule).
    """
    if action not in actions.ALL_LABELS:
        raise ValueError(f"unknown action label {action!r}")
    used = prior_counts.get(action, 0)
    quota = plan.quotas.get(action, 0)
    if used < quota:
        reward = profile.correctness_unit(plan, action)
    else:
        reward = -profile.invalid_penalty
    if profile.penalty_convention == PER_STEP:
        reward -= profile.per_step_penalty
    if used + 1 > profile.repetition_threshold:
        reward -= profile.repetition_penalty
    return reward


def parse_failure_reward(profile: RewardProfile) -> float:
    """Reward for a step whose agent text contained no usable action."""
    reward = -profile.invalid_penalty
    if profile.penalty_convention == PER_STEP:
        reward -= profile.per_step_penalty
    return reward


def episode_total(
    step_rewards: Sequence[float], success: bool, profile: RewardProfile
) -> float:
    total = math.fsum(step_rewards)
    if success:
        total += profile.success_bonus
    return total


def max_reward(
    plan: QuotaPlan, profile: RewardProfile, horizon: int | None = None
) -> float | None:
    """Total of any quota-respecting ordering, excluding the success bonus.

    Repetition penalties are not charged here; quotas that force a label
    beyond the repetition threshold are reported by repetition_overhead.
    Returns None when the plan cannot fit the horizon.
    """
    if horizon is not None and plan.distance > horizon:
        return None
    per_type = 1.0 if profile.penalty_convention == PER_STEP else 1.0 - profile.per_step_penalty
    total = per_type * len(plan.types_present())
    if profile.penalty_convention == PER_STEP:
        total -= profile.per_step_penalty * plan.distance
    return total


def repetition_overhead(plan: QuotaPlan, profile: RewardProfile) -> float:
    """Repetition penalty any quota-respecting ordering necessarily incurs."""
    over = sum(
        max(0, count - profile.repetition_threshold)
        for count in plan.quotas.values()
    )
    return profile.repetition_penalty * over


class RewardTracker:
    """Per-episode bookkeeping around the pure reward functions."""

    def __init__(self, plan: QuotaPlan, profile: RewardProfile):
        self.plan = plan
        self.profile = profile
        self.counts: dict[str, int] = {}
        self.step_rewards: list[float] = []

    def on_action(self, label: str) -> float:
        reward = step_reward(label, self.plan, self.profile, self.counts)
        self.counts[label] = self.counts.get(label, 0) + 1
        self.step_rewards.append(reward)
        return reward

    def on_parse_failure(self) -> float:
        reward = parse_failure_reward(self.profile)
        self.step_rewards.append(reward)
        return reward

    def total(self, success: bool) -> float:
        return episode_total(self.step_rewards, success, self.profile)
