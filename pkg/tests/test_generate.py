import json
from collections import Counter

import numpy as np
import pytest

from shapegrid import actions
from shapegrid.generate import (
    GenerationError,
    gen_building_block,
    gen_dataset,
    gen_scenario,
    gen_suite,
    parse_pattern,
    read_suite,
    verify_sample,
    write_dataset,
    write_suite,
)
from shapegrid.geometry import DEFAULT_GRID, GridSpec, iou, render_mask
from shapegrid.prompts import DYNAMIC, build_prompt
from shapegrid.rewards import derive_quota_plan
from shapegrid.scenario import validate_scenario
from shapegrid.shapes import rasterize


def test_building_block_distance_one(library):
    for seed in range(150):
        sample = gen_building_block(seed)
        verify_sample(sample)
        plan = derive_quota_plan(sample.start, sample.target)
        assert plan.distance == 1
        assert dict(plan.quotas) == {sample.delta_label: 1}


def test_building_block_label_semantics(library):
    trans = gen_building_block(3, label="right")
    assert trans.target.col == trans.start.col + 1
    assert trans.target.row == trans.start.row
    rot = gen_building_block(4, label="slight_rotation")
    assert (rot.target.orientation - rot.start.orientation) % 360 == 45
    sc = gen_building_block(5, label="double_size")
    assert sc.target.scale == sc.start.scale + 1
    assert (sc.target.col, sc.target.row) == (sc.start.col, sc.start.row)


def test_building_block_noop_labels(library):
    sample = gen_building_block(6, label="no_rotation")
    assert sample.label == "no_rotation"
    assert sample.category == "rot"
    # the pair's only delta is of a different type, so the rotation answer
    # "none needed" is truthful
    assert actions.LABEL_TYPE[sample.delta_label] != "rot"
    assert sample.start.orientation == sample.target.orientation
    assert sample.history == ("translation", "scaling")
    verify_sample(sample)


def test_building_block_pairs_visibly_differ(library):
    for seed in range(60):
        sample = gen_building_block(seed, category="rot")
        a = rasterize(sample.start, sample.grid, library)
        b = rasterize(sample.target, sample.grid, library)
        assert not np.array_equal(a, b)
        assert iou(a, b) < 0.9


def test_building_block_prompt_is_dynamic_template(library):
    sample = gen_building_block(9)
    expected = build_prompt(
        DYNAMIC,
        render_mask(rasterize(sample.target, sample.grid, library)),
        render_mask(rasterize(sample.start, sample.grid, library)),
        sample.history,
    )
    assert sample.prompt(library) == expected
    assert sample.completion() == f"<answer>{sample.label}</answer>"


def test_dataset_balance_uniqueness_determinism(library):
    n = 440
    samples = gen_dataset(n=n, seed=11)
    assert len(samples) == n
    counts = Counter(s.label for s in samples)
    assert set(counts) == set(actions.ALL_LABELS)
    assert max(counts.values()) - min(counts.values()) <= 1
    keys = {(s.start, s.target, s.label) for s in samples}
    assert len(keys) == n
    again = gen_dataset(n=n, seed=11)
    assert [(s.start, s.target, s.label) for s in samples] == [
        (s.start, s.target, s.label) for s in again
    ]


def test_dataset_without_noops(library):
    samples = gen_dataset(n=80, seed=2, include_noops=False)
    assert set(Counter(s.label for s in samples)) == set(actions.EFFECTIVE_LABELS)


def test_dataset_size_validation():
    with pytest.raises(ValueError):
        gen_dataset(n=0, seed=1)
    assert len(gen_dataset(n=1, seed=1)) == 1


def test_dataset_file_determinism(tmp_path, library):
    samples = gen_dataset(n=33, seed=7)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(samples, p1, seed=7, settings={"n": 33})
    write_dataset(gen_dataset(n=33, seed=7), p2, seed=7, settings={"n": 33})
    assert p1.read_bytes() == p2.read_bytes()
    lines = p1.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["kind"] == "header" and header["tool"] == "shapegrid"
    row = json.loads(lines[1])
    assert set(row) == {"prompt", "completion", "label", "category", "seed"}


def test_dataset_chat_format(tmp_path, library):
    samples = gen_dataset(n=5, seed=3)
    path = tmp_path / "chat.jsonl"
    write_dataset(samples, path, seed=3, settings={}, chat_format=True)
    row = json.loads(path.read_text().splitlines()[1])
    roles = [m["role"] for m in row["messages"]]
    assert roles == ["system", "user", "assistant"]
    assert row["messages"][2]["content"].startswith("<answer>")


def test_dataset_exhaustion_error():
    # tiny grid: unique distance-1 pairs run out quickly
    with pytest.raises(GenerationError) as err:
        gen_dataset(n=100_000, seed=1, grid=GridSpec(width=8, height=8))
    assert err.value.achieved > 0


def test_scenario_invariants(library):
    distances = set()
    for seed in range(100):
        spec = gen_scenario(seed, max_distance=5)
        validate_scenario(spec, 0.9, library)
        assert 1 <= spec.plan.distance <= 5
        distances.add(spec.plan.distance)
        start_iou = iou(
            rasterize(spec.start, spec.grid, library),
            rasterize(spec.target, spec.grid, library),
        )
        assert start_iou < 0.9
    assert distances == {1, 2, 3, 4, 5}


def test_scenario_pattern_filter(library):
    for seed in range(30):
        spec = gen_scenario(seed, pattern="3t1r1s")
        assert spec.plan.distance == 5
        assert spec.plan.type_total("trans") == 3
        assert spec.plan.type_total("rot") == 1
        assert spec.plan.type_total("scale") == 1
        # the translation split is two of one direction plus one of another
        trans_counts = sorted(
            c for l, c in spec.plan.quotas.items() if actions.LABEL_TYPE[l] == "trans"
        )
        assert trans_counts == [1, 2]


def test_scenario_label_cap(library):
    for seed in range(60):
        spec = gen_scenario(seed, max_distance=5)
        assert all(c <= 2 for c in spec.plan.quotas.values())


def test_scenario_determinism(library):
    assert gen_scenario(42) == gen_scenario(42)


def test_pattern_parsing():
    assert parse_pattern("3t1r1s") == {"trans": 3, "rot": 1, "scale": 1}
    assert parse_pattern("2T2R") == {"trans": 2, "rot": 2, "scale": 0}
    with pytest.raises(ValueError):
        parse_pattern("3x")
    with pytest.raises(ValueError):
        parse_pattern("")
    with pytest.raises(ValueError):
        gen_scenario(1, pattern="4t4r4s", max_distance=5)


def test_suite_write_read_round_trip(tmp_path, library):
    suite = gen_suite(8, seed=6)
    path = tmp_path / "suite.jsonl"
    write_suite(suite, path, seed=6, settings={"size": 8})
    loaded = read_suite(path)
    assert loaded == suite
    # suite files are byte-stable
    path2 = tmp_path / "suite2.jsonl"
    write_suite(gen_suite(8, seed=6), path2, seed=6, settings={"size": 8})
    assert path.read_bytes() == path2.read_bytes()


def test_suite_entries_carry_ascii_blocks(tmp_path, library):
    suite = gen_suite(2, seed=9)
    path = tmp_path / "suite.jsonl"
    write_suite(suite, path, seed=9, settings={})
    rows = [json.loads(l) for l in path.read_text().splitlines()[1:]]
    for row in rows:
        assert row["start_ascii"].startswith("*")
        assert row["target_ascii"].count("\n") == DEFAULT_GRID.height


def test_dataset_rationale_stub(tmp_path, library):
    samples = gen_dataset(n=4, seed=13)
    path = tmp_path / "stub.jsonl"
    write_dataset(samples, path, seed=13, settings={},
                  rationale_stub="The needed change is: ")
    rows = [json.loads(l) for l in path.read_text().splitlines()[1:]]
    for row in rows:
        assert row["completion"].startswith("The needed change is: <answer>")
