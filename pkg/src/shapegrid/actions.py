"""Action vocabulary, the answer-tag parser, and label application.

The vocabulary is exactly the label set the environment prompts offer.
Three labels per transformation type are identities ("no_*"); the eight
effective labels map one-to-one onto the non-identity atomic transforms.
"""

from __future__ import annotations

import enum
import re

from .geometry import GridSpec
from .shapes import (
    DOUBLE,
    DOWN,
    HALF,
    LEFT,
    RIGHT,
    UP,
    ShapeLibrary,
    ShapeState,
    rotate,
    scale,
    translate,
)

ROT, TRANS, SCALE = "rot", "trans", "scale"

NO_ROTATION = "no_rotation"
QUARTER_ROTATION = "quarter_rotation"
SLIGHT_ROTATION = "slight_rotation"
NO_TRANSLATION = "no_translation"
NO_SCALING = "no_scaling"
DOUBLE_SIZE = "double_size"
HALF_SIZE = "half_size"

ALL_LABELS = (
    NO_ROTATION,
    QUARTER_ROTATION,
    SLIGHT_ROTATION,
    NO_TRANSLATION,
    UP,
    DOWN,
    LEFT,
    RIGHT,
    NO_SCALING,
    DOUBLE_SIZE,
    HALF_SIZE,
)

EFFECTIVE_LABELS = (
    QUARTER_ROTATION,
    SLIGHT_ROTATION,
    UP,
    DOWN,
    LEFT,
    RIGHT,
    DOUBLE_SIZE,
    HALF_SIZE,
)

NOOP_LABELS = (NO_ROTATION, NO_TRANSLATION, NO_SCALING)

LABEL_TYPE = {
    NO_ROTATION: ROT,
    QUARTER_ROTATION: ROT,
    SLIGHT_ROTATION: ROT,
    NO_TRANSLATION: TRANS,
    UP: TRANS,
    DOWN: TRANS,
    LEFT: TRANS,
    RIGHT: TRANS,
    NO_SCALING: SCALE,
    DOUBLE_SIZE: SCALE,
    HALF_SIZE: SCALE,
}

# History marker recorded when a step consumed no parseable action.
INVALID_MARKER = "invalid"

_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_VOCAB = frozenset(ALL_LABELS)


class ParseFailure(enum.Enum):
    NO_ANSWER = "no_answer"
    UNKNOWN_LABEL = "unknown_label"


def parse_answer(text: str) -> str | ParseFailure:
    """Extract the action label from free text.

    Takes the last complete <answer>...</answer> pair; content is trimmed
    and lowercased before matching the vocabulary. Never raises.
    """
    matches = _ANSWER_RE.findall(text or "")
    if not matches:
        return ParseFailure.NO_ANSWER
    label = matches[-1].strip().lower()
    if label not in _VOCAB:
        return ParseFailure.UNKNOWN_LABEL
    return label


def answer_text(label: str) -> str:
    """Canonical raw text an agent emits for a label."""
    return f"<answer>{label}</answer>"


def apply_label(
    state: ShapeState, label: str, grid: GridSpec, library: ShapeLibrary
) -> tuple[ShapeState, bool]:
    """Apply a vocabulary label to a state.

    Returns the next state and whether the step had any effect (no-op
    labels, clamped translations, and out-of-range scalings do not).
    """
    if label in NOOP_LABELS:
        return state, False
    if label == QUARTER_ROTATION:
        return rotate(state, 90, grid, library), True
    if label == SLIGHT_ROTATION:
        return rotate(state, 45, grid, library), True
    if label in (UP, DOWN, LEFT, RIGHT):
        moved = translate(state, label, grid, library)
        return moved, moved is not state
    if label == DOUBLE_SIZE:
        resized = scale(state, DOUBLE, grid, library)
        return resized, resized is not state
    if label == HALF_SIZE:
        resized = scale(state, HALF, grid, library)
        return resized, resized is not state
    raise ValueError(f"unknown action label {label!r}")
