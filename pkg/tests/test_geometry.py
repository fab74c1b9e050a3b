import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shapegrid.geometry import (
    AsciiParseError,
    GridSpec,
    crop_to_content,
    double_mask,
    halve_mask,
    iou,
    mask_from_art,
    parse_mask,
    render_mask,
)

masks = arrays(
    dtype=bool,
    shape=st.tuples(st.integers(1, 30), st.integers(1, 30)),
    elements=st.booleans(),
)


def test_grid_spec_minimum_side():
    GridSpec(width=8, height=8)
    with pytest.raises(ValueError):
        GridSpec(width=7, height=8)
    with pytest.raises(ValueError):
        GridSpec(width=8, height=7)


def test_render_format():
    mask = np.zeros((2, 4), dtype=bool)
    assert render_mask(mask) == "*    *\n*    *\n"
    mask[0, 1] = True
    assert render_mask(mask) == "* #  *\n*    *\n"


def test_parse_single_line():
    assert parse_mask("*##*\n").tolist() == [[True, True]]
    assert parse_mask("*##*").tolist() == [[True, True]]


def test_parse_rejects_missing_border():
    with pytest.raises(AsciiParseError) as err:
        parse_mask("#  *\n")
    assert err.value.line_no == 1


def test_parse_rejects_ragged_and_foreign():
    with pytest.raises(AsciiParseError) as err:
        parse_mask("*##*\n*#*\n")
    assert err.value.line_no == 2
    with pytest.raises(AsciiParseError) as err:
        parse_mask("*##*\n*#x*\n")
    assert err.value.line_no == 2
    with pytest.raises(AsciiParseError):
        parse_mask("")


@given(masks)
@settings(max_examples=150)
def test_render_parse_round_trip(mask):
    assert np.array_equal(parse_mask(render_mask(mask)), mask)


@given(masks)
@settings(max_examples=50)
def test_render_is_fixpoint_of_parse_render(mask):
    text = render_mask(mask)
    assert render_mask(parse_mask(text)) == text


def test_iou_identical_and_disjoint():
    a = np.zeros((5, 5), dtype=bool)
    a[1:3, 1:3] = True
    assert iou(a, a) == 1.0
    b = np.zeros((5, 5), dtype=bool)
    b[3:5, 3:5] = True
    assert iou(a, b) == 0.0


def test_iou_hand_counted_overlap():
    # two 2x2 blocks overlapping in exactly one cell: 1 / (4 + 4 - 1)
    a = np.zeros((4, 4), dtype=bool)
    b = np.zeros((4, 4), dtype=bool)
    a[0:2, 0:2] = True
    b[1:3, 1:3] = True
    assert iou(a, b) == pytest.approx(1 / 7)


def test_iou_empty_masks_and_mismatch():
    empty = np.zeros((3, 3), dtype=bool)
    assert iou(empty, empty) == 1.0
    with pytest.raises(ValueError):
        iou(empty, np.zeros((3, 4), dtype=bool))


@given(masks, st.integers(-5, 5), st.integers(-5, 5))
@settings(max_examples=60)
def test_iou_translation_invariant(mask, dx, dy):
    # pad generously, then shift both masks by the same offset
    h, w = mask.shape
    canvas = np.zeros((h + 12, w + 12), dtype=bool)
    canvas[6 : 6 + h, 6 : 6 + w] = mask
    shifted = np.roll(np.roll(canvas, dy, axis=0), dx, axis=1)
    other = np.roll(canvas, 1, axis=0)
    other_shifted = np.roll(np.roll(other, dy, axis=0), dx, axis=1)
    assert iou(canvas, other) == pytest.approx(iou(shifted, other_shifted))


@given(masks)
@settings(max_examples=100)
def test_double_population_and_left_inverse(mask):
    doubled = double_mask(mask)
    assert doubled.sum() == 4 * mask.sum()
    assert np.array_equal(halve_mask(doubled), mask)


@given(masks)
@settings(max_examples=100)
def test_half_then_double_is_superset(mask):
    regrown = double_mask(halve_mask(mask))[: mask.shape[0], : mask.shape[1]]
    assert np.all(regrown[mask])


def test_crop_to_content():
    mask = np.zeros((5, 6), dtype=bool)
    mask[2, 3] = True
    mask[3, 4] = True
    assert crop_to_content(mask).shape == (2, 2)
    with pytest.raises(ValueError):
        crop_to_content(np.zeros((3, 3), dtype=bool))


def test_mask_from_art_round_trip():
    art = "..#\n##.\n"
    mask = mask_from_art(art)
    assert mask.tolist() == [[False, False, True], [True, True, False]]
