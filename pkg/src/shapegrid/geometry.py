"""Grid domain, boolean shape masks, ASCII rendering/parsing, and IoU.

Masks are 2-D numpy bool arrays (rows x cols), row 0 at the top. All
functions here are pure; nothing mutates its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SHAPE_CHAR = "#"
EMPTY_CHAR = " "
BORDER_CHAR = "*"

MIN_GRID_SIDE = 8


class AsciiParseError(ValueError):
    """Raised when ASCII-art text cannot be parsed back into a mask."""

    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


@dataclass(frozen=True)
class GridSpec:
    """Bounded integer grid that every shape footprint must stay inside."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < MIN_GRID_SIDE or self.height < MIN_GRID_SIDE:
            raise ValueError(
                f"grid must be at least {MIN_GRID_SIDE}x{MIN_GRID_SIDE}, "
                f"got {self.width}x{self.height}"
            )

    def fits(self, col: int, row: int, mask_width: int, mask_height: int) -> bool:
        """Whether a mask of the given size placed at (col, row) stays inside."""
        return (
            col >= 0
            and row >= 0
            and col + mask_width <= self.width
            and row + mask_height <= self.height
        )

    def empty_mask(self) -> np.ndarray:
        return np.zeros((self.height, self.width), dtype=bool)

    def to_json(self) -> dict:
        return {"width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, obj: dict) -> "GridSpec":
        return cls(width=int(obj["width"]), height=int(obj["height"]))


DEFAULT_GRID = GridSpec(width=27, height=27)


def mask_from_art(art: str) -> np.ndarray:
    """Build a mask from '#'/'.' art (whitespace-trimmed, '.'/' ' are empty)."""
    lines = [line for line in art.strip("\n").split("\n")]
    width = max(len(line) for line in lines)
    return np.array(
        [[ch == SHAPE_CHAR for ch in line.ljust(width)] for line in lines],
        dtype=bool,
    )


def art_from_mask(mask: np.ndarray) -> str:
    return "\n".join(
        "".join(SHAPE_CHAR if cell else "." for cell in row) for row in mask
    )


def render_mask(mask: np.ndarray) -> str:
    """Render a mask as star-bordered text, one '*cells*' line per row.

    Every line, including the last, ends with a newline.
    """
    rows = []
    for row in mask:
        cells = "".join(SHAPE_CHAR if cell else EMPTY_CHAR for cell in row)
        rows.append(f"{BORDER_CHAR}{cells}{BORDER_CHAR}\n")
    return "".join(rows)


def parse_mask(text: str) -> np.ndarray:
    """Parse star-bordered text back into a mask.

    Rejects ragged lines, missing border stars, and foreign characters,
    naming the 1-based offending line.
    """
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines = lines[:-1]
    if not lines:
        raise AsciiParseError(1, "empty input")
    width = len(lines[0]) - 2
    rows = []
    for i, line in enumerate(lines, start=1):
        if len(line) < 2 or line[0] != BORDER_CHAR or line[-1] != BORDER_CHAR:
            raise AsciiParseError(i, f"line must start and end with {BORDER_CHAR!r}")
        if len(line) - 2 != width:
            raise AsciiParseError(
                i, f"inconsistent width {len(line) - 2}, expected {width}"
            )
        cells = []
        for ch in line[1:-1]:
            if ch == SHAPE_CHAR:
                cells.append(True)
            elif ch == EMPTY_CHAR:
                cells.append(False)
            else:
                raise AsciiParseError(i, f"unexpected character {ch!r}")
        rows.append(cells)
    return np.array(rows, dtype=bool).reshape(len(rows), width)


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection-over-union of two equally sized masks.

    Two empty masks are defined as identical (IoU 1.0).
    """
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a, b).sum())
    return inter / union


def crop_to_content(mask: np.ndarray) -> np.ndarray:
    """Tight bounding-box crop; an all-empty mask raises."""
    rows = np.any(mask, axis=1)
    cols = np.any(mask, axis=0)
    if not rows.any():
        raise ValueError("cannot crop an empty mask")
    r0, r1 = int(np.argmax(rows)), len(rows) - int(np.argmax(rows[::-1]))
    c0, c1 = int(np.argmax(cols)), len(cols) - int(np.argmax(cols[::-1]))
    return mask[r0:r1, c0:c1]


def rotate_mask_90(mask: np.ndarray, quarter_turns: int = 1) -> np.ndarray:
    """Exact counter-clockwise raster rotation by multiples of 90 degrees."""
    return np.rot90(mask, quarter_turns % 4)


def double_mask(mask: np.ndarray) -> np.ndarray:
    """Each cell becomes a 2x2 block; population exactly quadruples."""
    return np.repeat(np.repeat(mask, 2, axis=0), 2, axis=1)


def halve_mask(mask: np.ndarray) -> np.ndarray:
    """Each 2x2 block collapses to one cell by logical OR.

    Odd dimensions are padded with empty cells on the bottom/right before
    blocking, so halve_mask(double_mask(m)) == m exactly.
    """
    h, w = mask.shape
    ph, pw = (h + 1) // 2 * 2, (w + 1) // 2 * 2
    padded = np.zeros((ph, pw), dtype=bool)
    padded[:h, :w] = mask
    blocks = padded.reshape(ph // 2, 2, pw // 2, 2)
    return blocks.any(axis=(1, 3))
