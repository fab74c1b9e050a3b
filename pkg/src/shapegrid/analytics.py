"""Analytic random-policy baseline, Monte Carlo cross-checks, the reward
tree, and the evaluation harness.

The analytic model treats the count of prior selections of each
ground-truth label under a uniform random policy as binomial in (k-1,
1/|A|): a step earns the label's credit while its count is under quota and
the invalid penalty otherwise. The implementation includes the selection
probability of the step's own action; the printed closed form that omits
it is available via ``literal_form`` for comparison, but it does not
reproduce the published table. Repetition penalties are excluded from the
analytic model and, by default, from the Monte Carlo mirror.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import actions
from .episode import EpisodeConfig, run_episode
from .rewards import PER_STEP, QuotaPlan, RewardProfile
from .scenario import ScenarioSpec
from .seeding import rng_for
from .shapes import ShapeLibrary, default_library

DEFAULT_SPACE_SIZE = len(actions.EFFECTIVE_LABELS)


@dataclass(frozen=True)
class RandomPolicyModel:
    """Uniform-policy reward model over a quota plan."""

    plan: QuotaPlan
    profile: RewardProfile
    action_space_size: int = DEFAULT_SPACE_SIZE
    horizon: int = 5

    def __post_init__(self) -> None:
        if self.action_space_size < len(self.plan.quotas):
            raise ValueError(
                "action space smaller than the number of distinct quota labels"
            )

    def label_rewards(self) -> dict[str, float]:
        return {
            label: self.profile.correctness_unit(self.plan, label)
            for label in self.plan.quotas
        }


def _binom_cdf_below(n: int, p: float, c: int) -> float:
    """P(X < c) for X ~ Binomial(n, p)."""
    return math.fsum(
        math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(min(c, n + 1))
    )


def expected_step_reward(
    model: RandomPolicyModel, k: int, literal_form: bool = False
) -> float:
    """Expected reward of step k (1-based) under the uniform policy."""
    if not 1 <= k <= model.horizon:
        raise ValueError(f"step {k} outside [1, {model.horizon}]")
    size = model.action_space_size
    p = 1.0 / size
    n = k - 1
    rewards = model.label_rewards()
    lam = model.profile.invalid_penalty

    if literal_form:
        total_below = math.fsum(
            _binom_cdf_below(n, p, c) for c in model.plan.quotas.values()
        )
        positive = math.fsum(
            rewards[label] * _binom_cdf_below(n, p, model.plan.quotas[label])
            for label in model.plan.quotas
        )
        value = positive - lam * (1.0 - total_below)
    else:
        positive = math.fsum(
            p * rewards[label] * _binom_cdf_below(n, p, model.plan.quotas[label])
            for label in model.plan.quotas
        )
        p_invalid = (size - len(model.plan.quotas)) * p + math.fsum(
            p * (1.0 - _binom_cdf_below(n, p, model.plan.quotas[label]))
            for label in model.plan.quotas
        )
        value = positive - lam * p_invalid
    if model.profile.penalty_convention == PER_STEP:
        value -= model.profile.per_step_penalty
    return value


def expected_cumulative(
    model: RandomPolicyModel, literal_form: bool = False
) -> list[float]:
    """Cumulative expected reward after steps 1..horizon."""
    out, running = [], 0.0
    for k in range(1, model.horizon + 1):
        running += expected_step_reward(model, k, literal_form=literal_form)
        out.append(running)
    return out


def mc_step_rewards(
    model: RandomPolicyModel,
    trials: int,
    seed: int,
    with_repetition: bool = False,
) -> list[tuple[float, float]]:
    """(mean, stderr) of the step-k reward for every k, by simulation.

    Simulates uniform draws against the same quota rule the analytic model
    assumes; the repetition penalty participates only on request.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    size = model.action_space_size
    labels = sorted(model.plan.quotas)
    rewards = model.label_rewards()
    quota_arr = np.zeros(size, dtype=np.int64)
    reward_arr = np.zeros(size, dtype=np.float64)
    for i, label in enumerate(labels):
        quota_arr[i] = model.plan.quotas[label]
        reward_arr[i] = rewards[label]
    lam = model.profile.invalid_penalty

    rng = rng_for(seed, "mc", size, trials)
    draws = rng.integers(0, size, size=(trials, model.horizon))
    counts = np.zeros((trials, size), dtype=np.int32)
    idx = np.arange(trials)
    out = []
    for k in range(model.horizon):
        sel = draws[:, k]
        prior = counts[idx, sel]
        step = np.where(prior < quota_arr[sel], reward_arr[sel], -lam)
        if with_repetition:
            over = (prior + 1) > model.profile.repetition_threshold
            step = step - model.profile.repetition_penalty * over
        if model.profile.penalty_convention == PER_STEP:
            step = step - model.profile.per_step_penalty
        mean = float(step.mean())
        stderr = float(step.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
        out.append((mean, stderr))
        counts[idx, sel] += 1
    return out


def mc_step_reward(
    model: RandomPolicyModel,
    k: int,
    trials: int,
    seed: int,
    with_repetition: bool = False,
) -> tuple[float, float]:
    if not 1 <= k <= model.horizon:
        raise ValueError(f"step {k} outside [1, {model.horizon}]")
    return mc_step_rewards(model, trials, seed, with_repetition=with_repetition)[k - 1]


# --- reward tree ------------------------------------------------------------

TREE_TOKENS = {actions.SCALE: "scale", actions.TRANS: "tr", actions.ROT: "rot"}
_TOKEN_ORDER = ("scale", "tr", "rot")


@dataclass
class TreeNode:
    action: str | None
    cumulative: float
    children: list["TreeNode"] = field(default_factory=list)

    def child(self, action: str) -> "TreeNode":
        for node in self.children:
            if node.action == action:
                return node
        raise KeyError(f"no child {action!r}; have {[n.action for n in self.children]}")

    def path_values(self, tokens: Sequence[str]) -> list[float]:
        node, values = self, []
        for token in tokens:
            node = node.child(token)
            values.append(node.cumulative)
        return values

    def leaves(self) -> list["TreeNode"]:
        if not self.children:
            return [self]
        return [leaf for child in self.children for leaf in child.leaves()]


def reward_tree(
    plan: QuotaPlan,
    profile: RewardProfile,
    horizon: int | None = None,
    root_action: str | None = None,
) -> TreeNode:
    """All quota-respecting orderings at operation-type granularity.

    Each node carries the cumulative reward of its prefix; optionally the
    first move is pinned (the stock illustration roots the tree at scale).
    """
    if horizon is not None and plan.distance > horizon:
        raise ValueError(f"plan distance {plan.distance} exceeds horizon {horizon}")
    remaining = {
        TREE_TOKENS[kind]: plan.type_total(kind) for kind in plan.types_present()
    }
    units = {}
    for kind in plan.types_present():
        token = TREE_TOKENS[kind]
        for label in plan.quotas:
            if actions.LABEL_TYPE[label] == kind:
                units[token] = profile.correctness_unit(plan, label)
                break
    step_charge = profile.per_step_penalty if profile.penalty_convention == PER_STEP else 0.0

    def expand(
        node: TreeNode, counts: dict[str, int], prefix: list[float], first: bool
    ) -> None:
        for token in _TOKEN_ORDER:
            if counts.get(token, 0) <= 0:
                continue
            if first and root_action is not None and token != root_action:
                continue
            prefix.append(units[token] - step_charge)
            # fsum over the whole prefix keeps node values exactly on the
            # decimal grid (running += drifts an ulp off by depth five)
            child = TreeNode(action=token, cumulative=math.fsum(prefix))
            node.children.append(child)
            counts[token] -= 1
            expand(child, counts, prefix, False)
            counts[token] += 1
            prefix.pop()

    root = TreeNode(action=None, cumulative=0.0)
    expand(root, dict(remaining), [], True)
    return root


# --- evaluation harness ------------------------------------------------------


@dataclass
class EvalRow:
    scenario_seed: int
    distance: int
    outcome: str
    success: bool
    total_reward: float
    reward_excl_bonus: float
    step_rewards: list[float]
    sequence: tuple[str, ...]


@dataclass
class EvalReport:
    mode: str
    agent: str
    horizon: int
    rows: list[EvalRow]

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def mean_excl_bonus(self) -> float:
        return math.fsum(r.reward_excl_bonus for r in self.rows) / self.n

    @property
    def mean_incl_bonus(self) -> float:
        return math.fsum(r.total_reward for r in self.rows) / self.n

    @property
    def success_rate(self) -> float:
        return sum(r.success for r in self.rows) / self.n

    def cumulative_by_step(self) -> list[float]:
        """Mean cumulative reward through each step, carrying forward after
        early termination."""
        out = []
        for k in range(1, self.horizon + 1):
            out.append(
                math.fsum(
                    math.fsum(row.step_rewards[: min(k, len(row.step_rewards))])
                    for row in self.rows
                )
                / self.n
            )
        return out

    def sequence_counts(self, top: int = 10) -> list[tuple[str, int]]:
        from collections import Counter

        counted = Counter(" -> ".join(row.sequence) or "(none)" for row in self.rows)
        return counted.most_common(top)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "agent": self.agent,
            "horizon": self.horizon,
            "episodes": self.n,
            "mean_reward_excl_bonus": self.mean_excl_bonus,
            "mean_reward_incl_bonus": self.mean_incl_bonus,
            "success_rate": self.success_rate,
            "cumulative_by_step": self.cumulative_by_step(),
            "sequences": [
                {"sequence": seq, "count": count}
                for seq, count in self.sequence_counts()
            ],
            "rows": [
                {
                    "scenario_seed": row.scenario_seed,
                    "distance": row.distance,
                    "outcome": row.outcome,
                    "success": row.success,
                    "total_reward": row.total_reward,
                    "reward_excl_bonus": row.reward_excl_bonus,
                    "step_rewards": row.step_rewards,
                    "sequence": list(row.sequence),
                }
                for row in self.rows
            ],
        }

    def format_text(self) -> str:
        lines = [
            f"agent: {self.agent}   mode: {self.mode}   episodes: {self.n}",
            f"avg reward excl. success bonus: {self.mean_excl_bonus:8.3f}",
            f"avg reward incl. success bonus: {self.mean_incl_bonus:8.3f}",
            f"success rate:                  {self.success_rate:8.3f}",
            "",
            "step | cumulative reward",
            "-----+------------------",
        ]
        for k, value in enumerate(self.cumulative_by_step(), start=1):
            lines.append(f"{k:4d} | {value:12.3f}")
        lines.append("")
        lines.append("most frequent action sequences:")
        for seq, count in self.sequence_counts(5):
            lines.append(f"  {count:5d}x  {seq}")
        return "\n".join(lines) + "\n"


def _run_one(
    scenario: ScenarioSpec,
    config: EpisodeConfig,
    agent_spec: str,
    library: ShapeLibrary,
    episode_id: str,
) -> EvalRow:
    from .agents import agent_from_spec

    agent = agent_from_spec(
        agent_spec,
        episode_seed=scenario.seed,
        mode=config.mode,
        episode_id=episode_id,
    )
    try:
        record = run_episode(scenario, config, agent, library=library, seed=scenario.seed)
    finally:
        close = getattr(agent, "close", None)
        if close is not None:
            close()
    return EvalRow(
        scenario_seed=scenario.seed,
        distance=scenario.plan.distance,
        outcome=record.outcome,
        success=record.success,
        total_reward=record.total_reward,
        reward_excl_bonus=math.fsum(record.step_rewards),
        step_rewards=record.step_rewards,
        sequence=tuple(s.action if s.action else "invalid" for s in record.steps),
    )


def evaluate(
    agent_spec: str,
    scenarios: Sequence[ScenarioSpec],
    config: EpisodeConfig,
    library: ShapeLibrary | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Run every scenario to termination and aggregate.

    Results are ordered by suite position regardless of worker count, so
    reports are byte-stable under any parallelism.
    """
    if not scenarios:
        raise ValueError("scenario suite is empty")
    library = library or default_library()
    if jobs <= 1 or len(scenarios) <= 1:
        rows = [
            _run_one(s, config, agent_spec, library, episode_id=str(i))
            for i, s in enumerate(scenarios)
        ]
    else:
        if agent_spec.startswith(("cmd:", "tcp:")):
            raise ValueError("external agents hold one channel; run with --jobs 1")
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                pool.submit(_run_one, s, config, agent_spec, library, str(i))
                for i, s in enumerate(scenarios)
            ]
            rows = [f.result() for f in futures]
    return EvalReport(
        mode=config.mode,
        agent=agent_spec,
        horizon=config.horizon,
        rows=rows,
    )


def baseline_table(
    model: RandomPolicyModel,
    mc_trials: int = 0,
    seed: int = 0,
    literal_form: bool = False,
    with_repetition: bool = False,
) -> dict:
    """Analytic per-step and cumulative values, with optional MC columns."""
    per_step = [
        expected_step_reward(model, k, literal_form=literal_form)
        for k in range(1, model.horizon + 1)
    ]
    cumulative = np.cumsum(per_step).tolist()
    table = {
        "action_space_size": model.action_space_size,
        "invalid_penalty": model.profile.invalid_penalty,
        "profile": model.profile.name,
        "quotas": dict(sorted(model.plan.quotas.items())),
        "literal_form": literal_form,
        "per_step": per_step,
        "cumulative": cumulative,
    }
    if mc_trials > 0:
        mc = mc_step_rewards(model, mc_trials, seed, with_repetition=with_repetition)
        table["mc_trials"] = mc_trials
        table["mc_per_step"] = [m for m, _ in mc]
        table["mc_stderr"] = [s for _, s in mc]
        table["mc_cumulative"] = np.cumsum([m for m, _ in mc]).tolist()
        table["crosscheck_ok"] = all(
            abs(per_step[i] - mc[i][0]) <= 3 * mc[i][1] + 1e-12
            for i in range(model.horizon)
        )
    return table


def format_baseline_table(table: dict) -> str:
    header = (
        f"random-policy baseline  |A|={table['action_space_size']}  "
        f"lambda={table['invalid_penalty']}  profile={table['profile']}"
    )
    lines = [header, f"quotas: {table['quotas']}"]
    if table["literal_form"]:
        lines.append("(literal closed form, no selection factor: documentation only)")
    has_mc = "mc_per_step" in table
    if has_mc:
        lines.append("step |   E[R_k]  cumulative |    MC mean     stderr")
        lines.append("-----+-----------------------+----------------------")
    else:
        lines.append("step |   E[R_k]  cumulative")
        lines.append("-----+----------------------")
    for i in range(len(table["per_step"])):
        row = f"{i + 1:4d} | {table['per_step'][i]:9.4f} {table['cumulative'][i]:10.3f}"
        if has_mc:
            row += f" | {table['mc_per_step'][i]:10.4f} {table['mc_stderr'][i]:10.5f}"
        lines.append(row)
    if has_mc:
        lines.append(
            "cross-check: "
            + ("PASS (within 3 stderr)" if table["crosscheck_ok"] else "FAIL")
        )
    return "\n".join(lines) + "\n"


def write_report(report: EvalReport, path, seed: int, settings: dict) -> None:
    from . import __version__

    payload = {
        "kind": "report",
        "tool": "shapegrid",
        "version": __version__,
        "seed": seed,
        "settings": settings,
        "report": report.to_json(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
