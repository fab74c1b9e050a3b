"""Shape library, shape states, and the atomic spatial transforms.

A shape state is the tuple (orientation, anchor position, scale exponent).
Rasters for every (orientation, scale) pair are precomputed: runtime
rotation and scaling are pure table lookups, which makes the transform
group laws hold bit-exactly (four quarter turns, eight 45-degree turns,
and two half turns each return the identical raster).

The 45-degree family of each shape is authored once by ``author_shape_masks``
(nearest-neighbour rotation about the centroid, round-half-up, then a
connectivity repair that bridges any split strokes) and committed under
``data/shapes/`` as star-bordered text. Axis-aligned orientations are exact
raster rotations, so populated-cell counts match across them at every scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .geometry import (
    GridSpec,
    crop_to_content,
    double_mask,
    halve_mask,
    mask_from_art,
    parse_mask,
    render_mask,
    rotate_mask_90,
)

ORIENTATIONS = (0, 45, 90, 135, 180, 225, 270, 315)
SCALES = (-1, 0, 1)
ROTATION_ANGLES = (45, 90, 180)

UP, DOWN, LEFT, RIGHT = "up", "down", "left", "right"
DIRECTIONS = (UP, DOWN, LEFT, RIGHT)
# (dcol, drow); row 0 is the top row, so "up" decreases the row index.
DIRECTION_DELTAS = {UP: (0, -1), DOWN: (0, 1), LEFT: (-1, 0), RIGHT: (1, 0)}

DOUBLE, HALF = "double", "half"


class UnknownShapeError(ValueError):
    """A shape_id that the library has no masks for."""


class PlacementError(ValueError):
    """A footprint that cannot be placed inside the grid at all."""


# Base rasters at orientation 0, scale 0. The chevron is the double-stroke
# zigzag used in the stock puzzles; ell and tee widen test coverage.
BASE_ART = {
    "chevron": """
..#....
##.##..
.#...#.
..##.##
....#..
""",
    "ell": """
#..
#..
#..
###
""",
    "tee": """
#####
..#..
..#..
""",
}

SHAPE_IDS = tuple(sorted(BASE_ART))
DEFAULT_SHAPE = "chevron"


@dataclass(frozen=True)
class ShapeState:
    """Immutable shape state: orientation (deg CCW), anchor, scale exponent.

    The anchor is the (col, row) of the top-left corner of the raster's
    bounding box. Scale exponent k means a size factor of 2**k.
    """

    shape_id: str
    orientation: int
    col: int
    row: int
    scale: int

    def __post_init__(self) -> None:
        if self.orientation % 45 != 0 or not 0 <= self.orientation < 360:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        if self.scale not in SCALES:
            raise ValueError(f"scale exponent must be in {SCALES}")

    def to_json(self) -> dict:
        return {
            "orientation": self.orientation,
            "col": self.col,
            "row": self.row,
            "scale": self.scale,
        }

    @classmethod
    def from_json(cls, shape_id: str, obj: dict) -> "ShapeState":
        return cls(
            shape_id=shape_id,
            orientation=int(obj["orientation"]),
            col=int(obj["col"]),
            row=int(obj["row"]),
            scale=int(obj["scale"]),
        )


def _connected_components(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    """8-connected components, cells in scan order."""
    h, w = mask.shape
    seen = np.zeros_like(mask)
    comps = []
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                stack = [(r, c)]
                seen[r, c] = True
                comp = []
                while stack:
                    y, x = stack.pop()
                    comp.append((y, x))
                    for dy in (-1, 0, 1):
                        for dx in (-1, 0, 1):
                            ny, nx = y + dy, x + dx
                            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                                seen[ny, nx] = True
                                stack.append((ny, nx))
                comps.append(sorted(comp))
    return comps


def _bresenham(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    (r0, c0), (r1, c1) = a, b
    cells = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        cells.append((r, c))
        if (r, c) == (r1, c1):
            return cells
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def _connect(mask: np.ndarray) -> np.ndarray:
    """Bridge split components along the shortest line, closest pair first."""
    out = mask.copy()
    while True:
        comps = _connected_components(out)
        if len(comps) <= 1:
            return out
        best = None
        for i in range(len(comps)):
            for j in range(i + 1, len(comps)):
                for ca in comps[i]:
                    for cb in comps[j]:
                        d = (ca[0] - cb[0]) ** 2 + (ca[1] - cb[1]) ** 2
                        key = (d, ca, cb)
                        if best is None or key < best:
                            best = key
        _, ca, cb = best
        for r, c in _bresenham(ca, cb):
            out[r, c] = True


def nn_rotate_45(mask: np.ndarray) -> np.ndarray:
    """Author a 45-degree CCW variant of a raster.

    Cell centres rotate about the populated centroid; each lands in the cell
    containing its image (floor of the rotated centre, i.e. round-half-up on
    indices). Strokes that the rounding splits are re-bridged.
    """
    rr, cc = np.nonzero(mask)
    cy = float(rr.mean()) + 0.5
    cx = float(cc.mean()) + 0.5
    cos45 = sin45 = math.sqrt(0.5)
    out_r, out_c = [], []
    for r, c in zip(rr.tolist(), cc.tolist()):
        x, y = (c + 0.5) - cx, (r + 0.5) - cy
        # visual CCW with row index growing downward
        xn = x * cos45 + y * sin45
        yn = -x * sin45 + y * cos45
        out_r.append(math.floor(yn + cy))
        out_c.append(math.floor(xn + cx))
    rmin, cmin = min(out_r), min(out_c)
    rotated = np.zeros((max(out_r) - rmin + 1, max(out_c) - cmin + 1), dtype=bool)
    for r, c in zip(out_r, out_c):
        rotated[r - rmin, c - cmin] = True
    return crop_to_content(_connect(rotated))


def author_shape_masks(base: np.ndarray) -> dict[tuple[int, int], np.ndarray]:
    """All 24 (orientation, scale) rasters for one base raster.

    Scale variants are derived at the family root (0 or 45 degrees) and the
    remaining orientations are exact quarter-turn rotations of those, so the
    four axis-aligned orientations share populated-cell counts at each scale,
    and likewise the four diagonal ones.
    """
    entries: dict[tuple[int, int], np.ndarray] = {}
    for family_angle, family_mask in ((0, base), (45, nn_rotate_45(base))):
        by_scale = {
            -1: halve_mask(family_mask),
            0: family_mask,
            1: double_mask(family_mask),
        }
        for k in range(4):
            angle = (family_angle + 90 * k) % 360
            for scale, m in by_scale.items():
                rotated = rotate_mask_90(m, k)
                rotated.setflags(write=False)
                entries[(angle, scale)] = rotated
    return entries


class ShapeLibrary:
    """Precomputed rasters keyed by (shape_id, orientation, scale)."""

    def __init__(self, entries: dict[str, dict[tuple[int, int], np.ndarray]]):
        self._entries = entries

    @property
    def shape_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._entries))

    def mask(self, shape_id: str, orientation: int, scale: int) -> np.ndarray:
        try:
            per_shape = self._entries[shape_id]
        except KeyError:
            raise UnknownShapeError(
                f"unknown shape {shape_id!r}; known: {', '.join(self.shape_ids)}"
            ) from None
        return per_shape[(orientation % 360, scale)]

    def state_mask(self, state: ShapeState) -> np.ndarray:
        return self.mask(state.shape_id, state.orientation, state.scale)

    @classmethod
    def authored(cls) -> "ShapeLibrary":
        """Rebuild every raster from the base art (the authoring oracle)."""
        return cls(
            {
                shape_id: author_shape_masks(mask_from_art(art))
                for shape_id, art in BASE_ART.items()
            }
        )

    @classmethod
    def from_directory(cls, root: Path) -> "ShapeLibrary":
        entries: dict[str, dict[tuple[int, int], np.ndarray]] = {}
        for shape_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            per_shape: dict[tuple[int, int], np.ndarray] = {}
            for angle in ORIENTATIONS:
                for scale in SCALES:
                    path = shape_dir / _entry_filename(angle, scale)
                    mask = parse_mask(path.read_text(encoding="utf-8"))
                    mask.setflags(write=False)
                    per_shape[(angle, scale)] = mask
            entries[shape_dir.name] = per_shape
        if not entries:
            raise UnknownShapeError(f"no shape directories under {root}")
        return cls(entries)

    @classmethod
    def bundled(cls) -> "ShapeLibrary":
        """The library shipped as package data."""
        root = resources.files("shapegrid").joinpath("data", "shapes")
        return cls.from_directory(Path(str(root)))

    def export(self, root: Path) -> list[Path]:
        """Write every raster as star-bordered text, one file per entry."""
        written = []
        for shape_id in self.shape_ids:
            shape_dir = root / shape_id
            shape_dir.mkdir(parents=True, exist_ok=True)
            for (angle, scale), mask in sorted(self._entries[shape_id].items()):
                path = shape_dir / _entry_filename(angle, scale)
                path.write_text(render_mask(mask), encoding="utf-8")
                written.append(path)
        return written


def _entry_filename(angle: int, scale: int) -> str:
    return f"{angle:03d}_{scale}.txt"


_default_library: ShapeLibrary | None = None


def default_library() -> ShapeLibrary:
    """The bundled library, loaded once per process."""
    global _default_library
    if _default_library is None:
        _default_library = ShapeLibrary.bundled()
    return _default_library


def clamp_anchor(
    grid: GridSpec, col: int, row: int, mask_w: int, mask_h: int
) -> tuple[int, int]:
    """Minimal per-axis shift that brings the footprint inside the grid."""
    if mask_w > grid.width or mask_h > grid.height:
        raise PlacementError(
            f"footprint {mask_w}x{mask_h} cannot fit grid {grid.width}x{grid.height}"
        )
    return (
        min(max(col, 0), grid.width - mask_w),
        min(max(row, 0), grid.height - mask_h),
    )


def state_fits(state: ShapeState, grid: GridSpec, library: ShapeLibrary) -> bool:
    h, w = library.state_mask(state).shape
    return grid.fits(state.col, state.row, w, h)


def rasterize(state: ShapeState, grid: GridSpec, library: ShapeLibrary) -> np.ndarray:
    """Full-grid mask with the shape's raster pasted at its anchor."""
    tile = library.state_mask(state)
    h, w = tile.shape
    if not grid.fits(state.col, state.row, w, h):
        raise PlacementError(
            f"state footprint {w}x{h} at ({state.col},{state.row}) exits "
            f"grid {grid.width}x{grid.height}"
        )
    out = grid.empty_mask()
    out[state.row : state.row + h, state.col : state.col + w] = tile
    return out


def _repair(state: ShapeState, grid: GridSpec, library: ShapeLibrary) -> ShapeState:
    h, w = library.state_mask(state).shape
    col, row = clamp_anchor(grid, state.col, state.row, w, h)
    if (col, row) == (state.col, state.row):
        return state
    return replace(state, col=col, row=row)


def rotate(
    state: ShapeState, angle: int, grid: GridSpec, library: ShapeLibrary
) -> ShapeState:
    """Rotate CCW by 45, 90, or 180 degrees; re-anchor minimally if needed."""
    if angle not in ROTATION_ANGLES:
        raise ValueError(f"rotation angle must be one of {ROTATION_ANGLES}")
    turned = replace(state, orientation=(state.orientation + angle) % 360)
    return _repair(turned, grid, library)


def translate(
    state: ShapeState, direction: str, grid: GridSpec, library: ShapeLibrary
) -> ShapeState:
    """Move one cell; if the footprint would exit the grid, stay put."""
    dcol, drow = DIRECTION_DELTAS[direction]
    h, w = library.state_mask(state).shape
    col, row = state.col + dcol, state.row + drow
    if not grid.fits(col, row, w, h):
        return state
    return replace(state, col=col, row=row)


def scale(
    state: ShapeState, factor: str, grid: GridSpec, library: ShapeLibrary
) -> ShapeState:
    """Double or halve; out-of-range exponents degrade to a no-effect step."""
    delta = {DOUBLE: 1, HALF: -1}[factor]
    exponent = state.scale + delta
    if exponent < min(SCALES) or exponent > max(SCALES):
        return state
    return _repair(replace(state, scale=exponent), grid, library)


def render_state(state: ShapeState, grid: GridSpec, library: ShapeLibrary) -> str:
    """Star-bordered text of the state's full-grid raster."""
    from .geometry import render_mask

    return render_mask(rasterize(state, grid, library))


def state_digest(state: ShapeState) -> str:
    """Short stable digest of the state tuple (raster is determined by it)."""
    import hashlib

    text = f"{state.shape_id}|{state.orientation}|{state.col},{state.row}|{state.scale}"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
