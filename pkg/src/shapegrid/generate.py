"""Procedural task synthesis: single-action training samples and scenarios.

Everything is a pure function of (seed, settings): per-item generators draw
from independently derived RNG streams, so datasets and suites are
byte-stable across reruns and across worker counts. Generation is checked,
not trusted — every emitted item passes its own verifier before it leaves
this module.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import actions, prompts
from .geometry import DEFAULT_GRID, GridSpec, iou, render_mask
from .rewards import QuotaPlan, derive_quota_plan, minimal_rotation_steps
from .scenario import ScenarioSpec, ScenarioError, validate_scenario
from .seeding import derive_seed, rng_for
from .shapes import (
    DEFAULT_SHAPE,
    DOWN,
    LEFT,
    RIGHT,
    SCALES,
    UP,
    ShapeLibrary,
    ShapeState,
    default_library,
    rasterize,
    state_digest,
    state_fits,
)

DEFAULT_TAU = 0.9
DEFAULT_MAX_DISTANCE = 5
DEFAULT_DATASET_SIZE = 12_000
# Per-label quota cap for generated scenarios. Two keeps ground-truth play
# clear of the repetition penalty (it fires on the third use of a label),
# and matches the stock evaluation pattern of 2+1 translations.
DEFAULT_LABEL_CAP = 2

_TYPE_WORDS = {actions.ROT: "rotation", actions.TRANS: "translation", actions.SCALE: "scaling"}


class GenerationError(RuntimeError):
    def __init__(self, message: str, achieved: int = 0):
        super().__init__(message)
        self.achieved = achieved


@dataclass(frozen=True)
class SftSample:
    """One single-action training sample (task distance exactly 1)."""

    label: str
    category: str
    seed: int
    start: ShapeState
    target: ShapeState
    delta_label: str
    history: tuple[str, ...]
    grid: GridSpec

    def prompt(self, library: ShapeLibrary) -> str:
        return prompts.build_prompt(
            prompts.DYNAMIC,
            render_mask(rasterize(self.target, self.grid, library)),
            render_mask(rasterize(self.start, self.grid, library)),
            self.history,
        )

    def completion(self, rationale_stub: str = "") -> str:
        # optionally prefix a fixed rationale line ahead of the answer tag
        return rationale_stub + actions.answer_text(self.label)

    def to_json(self, library: ShapeLibrary, rationale_stub: str = "") -> dict:
        return {
            "prompt": self.prompt(library),
            "completion": self.completion(rationale_stub),
            "label": self.label,
            "category": self.category,
            "seed": self.seed,
        }

    def to_chat_json(self, library: ShapeLibrary, rationale_stub: str = "") -> dict:
        system = prompts.system_template(prompts.DYNAMIC).replace(
            prompts.ANALYZED_SLOT, prompts.join_history(self.history)
        )
        user = prompts.environment_block(
            render_mask(rasterize(self.target, self.grid, library)),
            render_mask(rasterize(self.start, self.grid, library)),
        )
        return {
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
                {"role": "assistant", "content": self.completion(rationale_stub)},
            ]
        }


def _sample_state(
    rng: np.random.Generator,
    grid: GridSpec,
    shape_id: str,
    library: ShapeLibrary,
    scale_choices: Sequence[int] = SCALES,
) -> ShapeState:
    # Uniform over the (orientation, scale) combos whose raster fits the
    # grid at all; small grids simply exclude the doubled variants.
    combos = [
        (orientation, scale)
        for orientation in range(0, 360, 45)
        for scale in scale_choices
        if library.mask(shape_id, orientation, scale).shape[0] <= grid.height
        and library.mask(shape_id, orientation, scale).shape[1] <= grid.width
    ]
    if not combos:
        raise GenerationError(
            f"shape {shape_id!r} cannot fit a {grid.width}x{grid.height} grid "
            f"at any orientation/scale"
        )
    orientation, scale = combos[int(rng.integers(0, len(combos)))]
    h, w = library.mask(shape_id, orientation, scale).shape
    col = int(rng.integers(0, grid.width - w + 1))
    row = int(rng.integers(0, grid.height - h + 1))
    return ShapeState(shape_id=shape_id, orientation=orientation, col=col, row=row, scale=scale)


def _apply_delta_strict(
    state: ShapeState, label: str, grid: GridSpec, library: ShapeLibrary
) -> ShapeState | None:
    """Apply one effective label without any clamping or re-anchoring.

    Returns None when the action would clamp, re-anchor, or leave the
    scale bounds — such pairs are not valid single-action tasks.
    """
    if label in (UP, DOWN, LEFT, RIGHT):
        from .shapes import DIRECTION_DELTAS

        dcol, drow = DIRECTION_DELTAS[label]
        candidate = ShapeState(
            shape_id=state.shape_id,
            orientation=state.orientation,
            col=state.col + dcol,
            row=state.row + drow,
            scale=state.scale,
        )
    elif label in (actions.QUARTER_ROTATION, actions.SLIGHT_ROTATION):
        angle = 90 if label == actions.QUARTER_ROTATION else 45
        candidate = ShapeState(
            shape_id=state.shape_id,
            orientation=(state.orientation + angle) % 360,
            col=state.col,
            row=state.row,
            scale=state.scale,
        )
    elif label in (actions.DOUBLE_SIZE, actions.HALF_SIZE):
        exponent = state.scale + (1 if label == actions.DOUBLE_SIZE else -1)
        if exponent < min(SCALES) or exponent > max(SCALES):
            return None
        candidate = ShapeState(
            shape_id=state.shape_id,
            orientation=state.orientation,
            col=state.col,
            row=state.row,
            scale=exponent,
        )
    else:
        raise ValueError(f"not an effective label: {label!r}")
    if not state_fits(candidate, grid, library):
        return None
    return candidate


def _steering_history(label: str) -> tuple[str, ...]:
    """History slot for an identity label: marks the other types analyzed."""
    if label not in actions.NOOP_LABELS:
        return ()
    own = actions.LABEL_TYPE[label]
    return tuple(
        _TYPE_WORDS[k] for k in (actions.ROT, actions.TRANS, actions.SCALE) if k != own
    )


def gen_building_block(
    seed: int,
    label: str | None = None,
    category: str | None = None,
    grid: GridSpec = DEFAULT_GRID,
    shape_id: str = DEFAULT_SHAPE,
    library: ShapeLibrary | None = None,
    tau: float = DEFAULT_TAU,
    max_tries: int = 256,
) -> SftSample:
    """One verified distance-1 sample.

    The pair always differs by exactly one effective action. For an
    identity label the differing action belongs to one of the other two
    types and the history slot steers analysis toward the label's type,
    whose truthful classification is the identity answer.
    """
    library = library or default_library()
    rng = rng_for(seed)
    if label is None:
        pool = (
            [l for l in actions.ALL_LABELS if actions.LABEL_TYPE[l] == category]
            if category
            else list(actions.ALL_LABELS)
        )
        label = str(pool[int(rng.integers(0, len(pool)))])

    if label in actions.NOOP_LABELS:
        own = actions.LABEL_TYPE[label]
        delta_pool = [
            l for l in actions.EFFECTIVE_LABELS if actions.LABEL_TYPE[l] != own
        ]
    else:
        delta_pool = [label]

    for attempt in range(2):
        attempt_rng = rng if attempt == 0 else rng_for(seed, "fallback")
        for _ in range(max_tries):
            start = _sample_state(attempt_rng, grid, shape_id, library)
            delta_label = str(delta_pool[int(attempt_rng.integers(0, len(delta_pool)))])
            target = _apply_delta_strict(start, delta_label, grid, library)
            if target is None:
                continue
            start_mask = rasterize(start, grid, library)
            target_mask = rasterize(target, grid, library)
            if np.array_equal(start_mask, target_mask):
                continue
            if iou(start_mask, target_mask) >= tau:
                continue
            plan = derive_quota_plan(start, target)
            if dict(plan.quotas) != {delta_label: 1}:
                continue
            return SftSample(
                label=label,
                category=actions.LABEL_TYPE[label],
                seed=seed,
                start=start,
                target=target,
                delta_label=delta_label,
                history=_steering_history(label),
                grid=grid,
            )
    raise GenerationError(
        f"could not realize a distance-1 pair for label {label!r} (seed {seed})"
    )


def _balanced_labels(n: int, labels: Sequence[str], rng: np.random.Generator) -> list[str]:
    """A length-n multiset as uniform as integer counts allow, shuffled."""
    base, remainder = divmod(n, len(labels))
    order = [labels[i] for i in rng.permutation(len(labels))]
    multiset: list[str] = []
    for i, label in enumerate(order):
        multiset.extend([label] * (base + (1 if i < remainder else 0)))
    return [multiset[i] for i in rng.permutation(len(multiset))]


def gen_dataset(
    n: int = DEFAULT_DATASET_SIZE,
    seed: int = 0,
    include_noops: bool = True,
    grid: GridSpec = DEFAULT_GRID,
    shape_id: str = DEFAULT_SHAPE,
    library: ShapeLibrary | None = None,
    tau: float = DEFAULT_TAU,
) -> list[SftSample]:
    """n unique verified samples with near-uniform label counts."""
    if n < 1:
        raise ValueError("dataset size must be at least 1")
    library = library or default_library()
    labels = actions.ALL_LABELS if include_noops else actions.EFFECTIVE_LABELS
    assignments = _balanced_labels(n, labels, rng_for(seed, "labels"))
    samples: list[SftSample] = []
    seen: set[tuple[str, str, str]] = set()
    for i, label in enumerate(assignments):
        found = False
        for salt in range(64):
            sample = gen_building_block(
                derive_seed(seed, "sample", i, salt),
                label=label,
                grid=grid,
                shape_id=shape_id,
                library=library,
                tau=tau,
            )
            key = (state_digest(sample.start), state_digest(sample.target), label)
            if key not in seen:
                seen.add(key)
                samples.append(sample)
                found = True
                break
        if not found:
            raise GenerationError(
                f"could not find a fresh pair for sample {i} (label {label!r}); "
                f"the grid may be too small for {n} unique samples",
                achieved=len(samples),
            )
    return samples


def verify_sample(sample: SftSample) -> None:
    """Independent distance-1 check; raises GenerationError on violation."""
    plan = derive_quota_plan(sample.start, sample.target)
    if plan.distance != 1:
        raise GenerationError(
            f"sample {sample.seed} has distance {plan.distance}, expected 1"
        )
    if dict(plan.quotas) != {sample.delta_label: 1}:
        raise GenerationError(
            f"sample {sample.seed} plan {plan.to_json()} does not match its delta"
        )


# --- multi-step scenarios ---------------------------------------------------


def parse_pattern(pattern: str) -> dict[str, int]:
    """Parse a per-type count spec like '3t1r1s' into type counts."""
    import re

    counts = {actions.TRANS: 0, actions.ROT: 0, actions.SCALE: 0}
    key = {"t": actions.TRANS, "r": actions.ROT, "s": actions.SCALE}
    tokens = re.findall(r"(\d+)([trs])", pattern.strip().lower())
    if not tokens or "".join(f"{n}{c}" for n, c in tokens) != pattern.strip().lower():
        raise ValueError(f"bad pattern {pattern!r}; expected e.g. '3t1r1s'")
    for num, code in tokens:
        counts[key[code]] += int(num)
    return counts


def _rotation_options(cap: int | None) -> list[dict[str, int]]:
    options = []
    for delta in range(0, 360, 45):
        quarters, slights = minimal_rotation_steps(delta)
        if cap is not None and (quarters > cap or slights > cap):
            continue
        quotas: dict[str, int] = {}
        if quarters:
            quotas[actions.QUARTER_ROTATION] = quarters
        if slights:
            quotas[actions.SLIGHT_ROTATION] = slights
        options.append(quotas)
    return options


def _scale_options(cap: int | None) -> list[tuple[int, dict[str, int]]]:
    options = []
    span = max(SCALES) - min(SCALES)
    for delta in range(-span, span + 1):
        count = abs(delta)
        if cap is not None and count > cap:
            continue
        if delta > 0:
            options.append((delta, {actions.DOUBLE_SIZE: delta}))
        elif delta < 0:
            options.append((delta, {actions.HALF_SIZE: -delta}))
        else:
            options.append((0, {}))
    return options


def _translation_options(total: int, cap: int | None) -> list[dict[str, int]]:
    options = []
    for horizontal in range(total + 1):
        vertical = total - horizontal
        if cap is not None and (horizontal > cap or vertical > cap):
            continue
        h_dirs = [LEFT, RIGHT] if horizontal else [None]
        v_dirs = [UP, DOWN] if vertical else [None]
        for hd, vd in itertools.product(h_dirs, v_dirs):
            quotas: dict[str, int] = {}
            if hd:
                quotas[hd] = horizontal
            if vd:
                quotas[vd] = vertical
            options.append(quotas)
    return options


def _enumerate_decompositions(
    distance: int,
    cap: int | None,
    pattern: dict[str, int] | None = None,
) -> list[tuple[dict[str, int], int]]:
    """All (quotas, scale_delta) whose counts sum to the distance."""
    decomps = []
    for rot in _rotation_options(cap):
        rot_count = sum(rot.values())
        if rot_count > distance:
            continue
        if pattern and rot_count != pattern[actions.ROT]:
            continue
        for scale_delta, scale_quota in _scale_options(cap):
            scale_count = sum(scale_quota.values())
            if rot_count + scale_count > distance:
                continue
            if pattern and scale_count != pattern[actions.SCALE]:
                continue
            trans_count = distance - rot_count - scale_count
            if pattern and trans_count != pattern[actions.TRANS]:
                continue
            for trans in _translation_options(trans_count, cap):
                quotas = {**rot, **scale_quota, **trans}
                if sum(quotas.values()) == distance:
                    decomps.append((quotas, scale_delta))
    return decomps


def _realize_target(start: ShapeState, quotas: dict[str, int]) -> ShapeState:
    orientation = start.orientation
    orientation += 90 * quotas.get(actions.QUARTER_ROTATION, 0)
    orientation += 45 * quotas.get(actions.SLIGHT_ROTATION, 0)
    scale = start.scale + quotas.get(actions.DOUBLE_SIZE, 0) - quotas.get(actions.HALF_SIZE, 0)
    col = start.col + quotas.get(RIGHT, 0) - quotas.get(LEFT, 0)
    row = start.row + quotas.get(DOWN, 0) - quotas.get(UP, 0)
    return ShapeState(
        shape_id=start.shape_id,
        orientation=orientation % 360,
        col=col,
        row=row,
        scale=scale,
    )


def gen_scenario(
    seed: int,
    max_distance: int = DEFAULT_MAX_DISTANCE,
    grid: GridSpec = DEFAULT_GRID,
    shape_id: str = DEFAULT_SHAPE,
    library: ShapeLibrary | None = None,
    tau: float = DEFAULT_TAU,
    label_cap: int | None = DEFAULT_LABEL_CAP,
    pattern: str | None = None,
    max_tries: int = 4096,
) -> ScenarioSpec:
    """A validated scenario with distance in [1, max_distance].

    Distance is sampled uniformly, then the quota decomposition uniformly
    among the valid ones for that distance; the start state is resampled
    until the full validation battery passes.
    """
    if not 1 <= max_distance:
        raise ValueError("max_distance must be at least 1")
    library = library or default_library()
    rng = rng_for(seed, "scenario")
    wanted = parse_pattern(pattern) if pattern else None
    if wanted is not None:
        distances = [sum(wanted.values())]
        if distances[0] < 1 or distances[0] > max_distance:
            raise ValueError(
                f"pattern {pattern!r} has distance {distances[0]}, "
                f"outside [1, {max_distance}]"
            )
    # The sampled distance is held fixed through inner retries so that
    # rejection (tight placements reject large deltas more often) does not
    # skew the realized distance distribution away from uniform.
    inner_tries = 64
    for _ in range(max(1, max_tries // inner_tries)):
        distance = (
            distances[0] if wanted is not None
            else int(rng.integers(1, max_distance + 1))
        )
        decomps = _enumerate_decompositions(distance, label_cap, wanted)
        if not decomps:
            continue
        for _ in range(inner_tries):
            quotas, scale_delta = decomps[int(rng.integers(0, len(decomps)))]
            scale_starts = [
                k for k in SCALES if min(SCALES) <= k + scale_delta <= max(SCALES)
            ]
            start = _sample_state(rng, grid, shape_id, library, scale_choices=scale_starts)
            target = _realize_target(start, quotas)
            spec = ScenarioSpec(
                start=start,
                target=target,
                plan=QuotaPlan(quotas=quotas),
                seed=seed,
                grid=grid,
            )
            try:
                validate_scenario(spec, tau, library)
            except (ScenarioError, ValueError):
                continue
            return spec
    raise GenerationError(f"no valid scenario found for seed {seed} after {max_tries} tries")


def gen_suite(
    size: int,
    seed: int,
    max_distance: int = DEFAULT_MAX_DISTANCE,
    grid: GridSpec = DEFAULT_GRID,
    shape_id: str = DEFAULT_SHAPE,
    library: ShapeLibrary | None = None,
    tau: float = DEFAULT_TAU,
    label_cap: int | None = DEFAULT_LABEL_CAP,
    pattern: str | None = None,
) -> list[ScenarioSpec]:
    if size < 1:
        raise ValueError("suite size must be at least 1")
    return [
        gen_scenario(
            derive_seed(seed, "suite", i),
            max_distance=max_distance,
            grid=grid,
            shape_id=shape_id,
            library=library,
            tau=tau,
            label_cap=label_cap,
            pattern=pattern,
        )
        for i in range(size)
    ]


# --- file formats -----------------------------------------------------------


def _header(kind: str, seed: int, settings: dict) -> dict:
    from . import __version__

    return {
        "kind": "header",
        "tool": "shapegrid",
        "version": __version__,
        "artifact": kind,
        "seed": seed,
        "settings": settings,
    }


def write_dataset(
    samples: Iterable[SftSample],
    path: Path,
    seed: int,
    settings: dict,
    library: ShapeLibrary | None = None,
    chat_format: bool = False,
    rationale_stub: str = "",
) -> int:
    library = library or default_library()
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_header("dataset", seed, settings), sort_keys=True) + "\n")
        for sample in samples:
            obj = (
                sample.to_chat_json(library, rationale_stub)
                if chat_format
                else sample.to_json(library, rationale_stub)
            )
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
            count += 1
    return count


def write_suite(
    scenarios: Iterable[ScenarioSpec],
    path: Path,
    seed: int,
    settings: dict,
    library: ShapeLibrary | None = None,
) -> int:
    library = library or default_library()
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(_header("suite", seed, settings), sort_keys=True) + "\n")
        for scenario in scenarios:
            fh.write(json.dumps(scenario.to_json(library=library), sort_keys=True) + "\n")
            count += 1
    return count


def read_suite(path: Path) -> list[ScenarioSpec]:
    scenarios = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("kind") == "header":
                continue
            scenarios.append(ScenarioSpec.from_json(obj))
    return scenarios
