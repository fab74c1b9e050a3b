"""Scenario specifications: a validated (start, target) task pair.

Validation is deliberately strong: beyond re-deriving the quota plan, it
enumerates every partial application of the quotas (all orderings share
these as prefixes, since rotations and scalings preserve the anchor) and
requires that each one stays inside the grid without clamping and that
none except the full application reaches the success threshold. Episodes
on a valid scenario therefore never clamp along ground-truth play and
cannot terminate early.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from . import actions
from .geometry import GridSpec, iou, render_mask
from .rewards import QuotaPlan, derive_quota_plan
from .shapes import (
    DOWN,
    LEFT,
    RIGHT,
    UP,
    ShapeLibrary,
    ShapeState,
    rasterize,
    state_fits,
)


class ScenarioError(ValueError):
    """A (start, target) pair violating the scenario contract."""


@dataclass(frozen=True)
class ScenarioSpec:
    start: ShapeState
    target: ShapeState
    plan: QuotaPlan
    seed: int
    grid: GridSpec

    def to_json(self, library: ShapeLibrary | None = None) -> dict:
        obj = {
            "seed": self.seed,
            "grid": self.grid.to_json(),
            "shape_id": self.start.shape_id,
            "start": self.start.to_json(),
            "target": self.target.to_json(),
            "plan": self.plan.to_json(),
        }
        if library is not None:
            obj["start_ascii"] = render_mask(rasterize(self.start, self.grid, library))
            obj["target_ascii"] = render_mask(rasterize(self.target, self.grid, library))
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ScenarioSpec":
        shape_id = str(obj["shape_id"])
        start = ShapeState.from_json(shape_id, obj["start"])
        target = ShapeState.from_json(shape_id, obj["target"])
        spec = cls(
            start=start,
            target=target,
            plan=derive_quota_plan(start, target),
            seed=int(obj["seed"]),
            grid=GridSpec.from_json(obj["grid"]),
        )
        stored = QuotaPlan.from_json(obj["plan"])
        if dict(stored.quotas) != dict(spec.plan.quotas):
            raise ScenarioError(
                f"stored plan {stored.to_json()} does not match derived "
                f"{spec.plan.to_json()}"
            )
        return spec


def _partial_states(spec: ScenarioSpec) -> list[tuple[ShapeState, int]]:
    """Every state reachable by applying a sub-multiset of the quotas.

    Returns (state, applied_count) pairs; ordering within the sub-multiset
    is irrelevant because only translations move the anchor.
    """
    labels = sorted(spec.plan.quotas)
    ranges = [range(spec.plan.quotas[label] + 1) for label in labels]
    out = []
    for combo in itertools.product(*ranges):
        orientation = spec.start.orientation
        scale = spec.start.scale
        col, row = spec.start.col, spec.start.row
        for label, count in zip(labels, combo):
            if label == actions.QUARTER_ROTATION:
                orientation += 90 * count
            elif label == actions.SLIGHT_ROTATION:
                orientation += 45 * count
            elif label == actions.DOUBLE_SIZE:
                scale += count
            elif label == actions.HALF_SIZE:
                scale -= count
            elif label == RIGHT:
                col += count
            elif label == LEFT:
                col -= count
            elif label == DOWN:
                row += count
            elif label == UP:
                row -= count
        state = ShapeState(
            shape_id=spec.start.shape_id,
            orientation=orientation % 360,
            col=col,
            row=row,
            scale=scale,
        )
        out.append((state, sum(combo)))
    return out


def validate_scenario(
    spec: ScenarioSpec, tau: float, library: ShapeLibrary
) -> None:
    """Raise ScenarioError unless the scenario honors every invariant."""
    derived = derive_quota_plan(spec.start, spec.target)
    if dict(derived.quotas) != dict(spec.plan.quotas):
        raise ScenarioError("plan does not match the derived quota plan")
    if not state_fits(spec.start, spec.grid, library):
        raise ScenarioError("start footprint exits the grid")
    if not state_fits(spec.target, spec.grid, library):
        raise ScenarioError("target footprint exits the grid")

    target_mask = rasterize(spec.target, spec.grid, library)
    distance = spec.plan.distance
    for state, applied in _partial_states(spec):
        if not state_fits(state, spec.grid, library):
            raise ScenarioError(
                f"ground-truth play leaves the grid after {applied} actions"
            )
        overlap = iou(rasterize(state, spec.grid, library), target_mask)
        if applied < distance and overlap >= tau:
            raise ScenarioError(
                f"success threshold reached {distance - applied} actions early "
                f"(IoU {overlap:.3f})"
            )
        if applied == distance and overlap < tau:
            raise ScenarioError(
                f"completed plan misses the success threshold (IoU {overlap:.3f})"
            )
