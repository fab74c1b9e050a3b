import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapegrid.rewards import (
    EQ5_LITERAL,
    FIGURE2,
    PlanError,
    QuotaPlan,
    RewardProfile,
    RewardTracker,
    derive_quota_plan,
    episode_total,
    max_reward,
    minimal_rotation_steps,
    parse_failure_reward,
    profile_by_name,
    repetition_overhead,
    step_reward,
)
from shapegrid.shapes import ShapeState

PATTERN_PLAN = QuotaPlan(
    quotas={"down": 2, "right": 1, "quarter_rotation": 1, "double_size": 1}
)


def chev(orientation=0, col=10, row=10, scale=0, shape_id="chevron"):
    return ShapeState(
        shape_id=shape_id, orientation=orientation, col=col, row=row, scale=scale
    )


# --- rotation decomposition ---------------------------------------------------


def brute_minimal_rotation(delta):
    # independent oracle: exhaustive search over turn combinations
    best = None
    for q in range(9):
        for s in range(9):
            if (90 * q + 45 * s) % 360 == delta % 360:
                if best is None or q + s < sum(best):
                    best = (q, s)
    return best


@pytest.mark.parametrize("delta", range(0, 360, 45))
def test_minimal_rotation_matches_brute_force(delta):
    assert minimal_rotation_steps(delta) == brute_minimal_rotation(delta)


def test_rotation_decomposition_values():
    assert minimal_rotation_steps(0) == (0, 0)
    assert minimal_rotation_steps(45) == (0, 1)
    assert minimal_rotation_steps(90) == (1, 0)
    assert minimal_rotation_steps(135) == (1, 1)
    assert minimal_rotation_steps(180) == (2, 0)
    assert minimal_rotation_steps(315) == (3, 1)


# --- quota plans ---------------------------------------------------------------


def test_plan_identity_is_empty():
    plan = derive_quota_plan(chev(), chev())
    assert plan.distance == 0 and not plan.quotas


def test_plan_full_pattern():
    start = chev(orientation=0, col=5, row=10, scale=0)
    target = chev(orientation=90, col=7, row=9, scale=1)
    plan = derive_quota_plan(start, target)
    assert dict(plan.quotas) == {
        "right": 2,
        "up": 1,
        "quarter_rotation": 1,
        "double_size": 1,
    }
    assert plan.distance == 5


def test_plan_135_degree_delta():
    plan = derive_quota_plan(chev(orientation=0), chev(orientation=135))
    assert dict(plan.quotas) == {"quarter_rotation": 1, "slight_rotation": 1}
    assert plan.distance == 2


def test_plan_rejects_shape_mismatch():
    with pytest.raises(PlanError):
        derive_quota_plan(chev(), chev(shape_id="ell"))


def test_plan_rejects_noop_labels_and_bad_counts():
    with pytest.raises(PlanError):
        QuotaPlan(quotas={"no_rotation": 1})
    with pytest.raises(PlanError):
        QuotaPlan(quotas={"up": 0})


def test_plan_type_totals():
    assert PATTERN_PLAN.type_total("trans") == 3
    assert PATTERN_PLAN.type_total("rot") == 1
    assert PATTERN_PLAN.type_total("scale") == 1
    assert PATTERN_PLAN.types_present() == ("rot", "trans", "scale")


# --- step rewards ---------------------------------------------------------------


def test_figure2_step_values():
    assert step_reward("double_size", PATTERN_PLAN, FIGURE2, {}) == 0.9
    assert step_reward("quarter_rotation", PATTERN_PLAN, FIGURE2, {}) == 0.9
    assert step_reward("down", PATTERN_PLAN, FIGURE2, {}) == pytest.approx(0.3)
    # quota exhausted and off-plan selections both cost the invalid penalty
    assert step_reward("right", PATTERN_PLAN, FIGURE2, {"right": 1}) == -0.1
    assert step_reward("left", PATTERN_PLAN, FIGURE2, {}) == -0.1
    assert step_reward("no_scaling", PATTERN_PLAN, FIGURE2, {}) == -0.1


def test_repetition_penalty_from_third_use():
    assert step_reward("down", PATTERN_PLAN, FIGURE2, {"down": 1}) == pytest.approx(0.3)
    third = step_reward("down", PATTERN_PLAN, FIGURE2, {"down": 2})
    assert third == pytest.approx(-0.1 - 0.2)
    fourth = step_reward("down", PATTERN_PLAN, FIGURE2, {"down": 3})
    assert fourth == pytest.approx(-0.3)
    # off-plan labels also accumulate repetition
    assert step_reward("no_rotation", PATTERN_PLAN, FIGURE2, {"no_rotation": 2}) == pytest.approx(-0.3)


def test_unknown_label_rejected():
    with pytest.raises(ValueError):
        step_reward("sideways", PATTERN_PLAN, FIGURE2, {})


def test_parse_failure_reward():
    assert parse_failure_reward(FIGURE2) == -0.1
    assert parse_failure_reward(EQ5_LITERAL) == pytest.approx(-0.2)


# --- episode totals ---------------------------------------------------------------


def perfect_steps(profile):
    counts = {}
    rewards = []
    for action in ["double_size", "down", "quarter_rotation", "down", "right"]:
        rewards.append(step_reward(action, PATTERN_PLAN, profile, counts))
        counts[action] = counts.get(action, 0) + 1
    return rewards


def test_figure2_episode_totals():
    steps = perfect_steps(FIGURE2)
    assert episode_total(steps, success=False, profile=FIGURE2) == 2.7
    assert episode_total(steps, success=True, profile=FIGURE2) == 4.7


def test_eq5_literal_episode_total():
    # independent evaluation of the literal formula: sum of 1/C_type credits
    # minus 0.1 per step taken
    steps = perfect_steps(EQ5_LITERAL)
    expected = math.fsum([1 / 3, 1 / 3, 1 / 3, 1.0, 1.0]) - 0.1 * 5
    assert episode_total(steps, success=False, profile=EQ5_LITERAL) == pytest.approx(expected)
    assert expected == pytest.approx(2.5)


def test_max_reward_values():
    assert max_reward(QuotaPlan(quotas={}), FIGURE2) == 0.0
    assert max_reward(PATTERN_PLAN, FIGURE2) == 2.7
    assert max_reward(QuotaPlan(quotas={"right": 5}), FIGURE2) == pytest.approx(0.9)
    assert max_reward(PATTERN_PLAN, EQ5_LITERAL) == pytest.approx(2.5)
    assert max_reward(PATTERN_PLAN, FIGURE2, horizon=4) is None
    assert max_reward(PATTERN_PLAN, FIGURE2, horizon=5) == 2.7


def test_repetition_overhead():
    assert repetition_overhead(PATTERN_PLAN, FIGURE2) == 0.0
    heavy = QuotaPlan(quotas={"right": 5})
    assert repetition_overhead(heavy, FIGURE2) == pytest.approx(0.6)


quota_plans = st.dictionaries(
    st.sampled_from(["up", "down", "left", "right", "quarter_rotation",
                     "slight_rotation", "double_size", "half_size"]),
    st.integers(1, 3),
    min_size=1,
    max_size=4,
).map(lambda q: QuotaPlan(quotas=q))


@given(quota_plans, st.randoms(use_true_random=False))
@settings(max_examples=80)
def test_order_independence_of_complete_orderings(plan, rnd):
    # any full quota-respecting ordering totals the same, repetition included
    base = [label for label, count in sorted(plan.quotas.items()) for _ in range(count)]
    shuffled = base[:]
    rnd.shuffle(shuffled)

    def total(order):
        tracker = RewardTracker(plan, FIGURE2)
        for action in order:
            tracker.on_action(action)
        return tracker.total(success=False)

    assert total(base) == pytest.approx(total(shuffled))


@given(quota_plans)
@settings(max_examples=60)
def test_prefix_monotonic_when_repetition_clear(plan):
    if any(count > FIGURE2.repetition_threshold for count in plan.quotas.values()):
        return  # repetition binds; monotonicity is not claimed there
    tracker = RewardTracker(plan, FIGURE2)
    last = 0.0
    for label, count in sorted(plan.quotas.items()):
        for _ in range(count):
            tracker.on_action(label)
            cumulative = math.fsum(tracker.step_rewards)
            assert cumulative > last
            last = cumulative


def test_tracker_matches_episode_total():
    tracker = RewardTracker(PATTERN_PLAN, FIGURE2)
    for action in ["double_size", "left", "down"]:
        tracker.on_action(action)
    tracker.on_parse_failure()
    expected = episode_total(tracker.step_rewards, True, FIGURE2)
    assert tracker.total(success=True) == expected


# --- profiles ---------------------------------------------------------------------


def test_profiles_registry_and_lookup():
    assert profile_by_name("figure2") is FIGURE2
    assert profile_by_name("eq5-literal") is EQ5_LITERAL
    with pytest.raises(ValueError):
        profile_by_name("figure3")


def test_profile_json_round_trip():
    prof = RewardProfile.from_json(FIGURE2.to_json())
    assert prof == FIGURE2
    custom = RewardProfile.from_json(
        {"name": "tweaked", "invalid_penalty": 0.05, "penalty_convention": "per-step"}
    )
    assert custom.invalid_penalty == 0.05
    assert custom.penalty_convention == "per-step"


def test_profile_validation():
    with pytest.raises(ValueError):
        RewardProfile(name="bad", penalty_convention="sometimes")
    with pytest.raises(ValueError):
        RewardProfile(name="bad", invalid_penalty=-1.0)


def test_correctness_unit_pools_translations():
    assert FIGURE2.correctness_unit(PATTERN_PLAN, "down") == pytest.approx(0.3)
    assert FIGURE2.correctness_unit(PATTERN_PLAN, "right") == pytest.approx(0.3)
    assert EQ5_LITERAL.correctness_unit(PATTERN_PLAN, "down") == pytest.approx(1 / 3)
    rot_pair = QuotaPlan(quotas={"quarter_rotation": 1, "slight_rotation": 1})
    assert FIGURE2.correctness_unit(rot_pair, "slight_rotation") == pytest.approx(0.45)
