import json

import pytest

from shapegrid.cli import (
    EXIT_FAIL,
    EXIT_GENERATION,
    EXIT_OK,
    EXIT_USAGE,
    main,
)


def run_cli(*argv):
    return main(list(argv))


def test_gen_dataset_deterministic_files(tmp_path, capsys):
    out1 = tmp_path / "a.jsonl"
    out2 = tmp_path / "b.jsonl"
    assert run_cli("gen-dataset", "--n", "10", "--seed", "1", "--out", str(out1)) == EXIT_OK
    assert run_cli("gen-dataset", "--n", "10", "--seed", "1", "--out", str(out2)) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()
    assert len(out1.read_text().splitlines()) == 11  # header + 10 samples


def test_gen_dataset_exhaustion_exit_code(tmp_path, capsys):
    out = tmp_path / "big.jsonl"
    code = run_cli("gen-dataset", "--n", "100000", "--grid", "8x8",
                   "--seed", "1", "--out", str(out))
    assert code == EXIT_GENERATION
    assert "generation failed after" in capsys.readouterr().err


def test_gen_suite_and_run_from_suite(tmp_path, capsys):
    suite = tmp_path / "suite.jsonl"
    assert run_cli("gen-suite", "--size", "4", "--seed", "3", "--out", str(suite)) == EXIT_OK
    code = run_cli("run", "--agent", "oracle", "--suite", str(suite), "--index", "1")
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["success"] is True


def test_run_oracle_pattern_totals(tmp_path, capsys):
    code = run_cli("run", "--agent", "oracle", "--mode", "dynamic",
                   "--scenario-seed", "11", "--pattern", "3t1r1s")
    assert code == EXIT_OK
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["total_reward"] == pytest.approx(4.7)
    assert summary["steps"] == 5


def test_run_oracle_static_mode(capsys):
    code = run_cli("run", "--agent", "oracle", "--mode", "static",
                   "--scenario-seed", "19")
    assert code == EXIT_OK


def test_run_horizon_exhausted_exit(capsys):
    code = run_cli("run", "--agent", "script:no_rotation", "--scenario-seed", "7")
    assert code == EXIT_FAIL


def test_run_trace_deterministic(tmp_path, capsys):
    t1, t2 = tmp_path / "t1.jsonl", tmp_path / "t2.jsonl"
    for path in (t1, t2):
        assert run_cli("run", "--agent", "random:seed=7", "--scenario-seed", "5",
                       "--trace", str(path)) in (EXIT_OK, EXIT_FAIL)
    assert t1.read_bytes() == t2.read_bytes()


def test_replay_round_trip_and_tamper(tmp_path, capsys):
    trace = tmp_path / "trace.jsonl"
    run_cli("run", "--agent", "random:seed=3", "--scenario-seed", "9",
            "--trace", str(trace))
    assert run_cli("replay", "--trace", str(trace)) == EXIT_OK
    lines = trace.read_text().splitlines()
    step = json.loads(lines[1])
    step["reward"] = 5.0
    lines[1] = json.dumps(step, sort_keys=True)
    trace.write_text("\n".join(lines) + "\n")
    assert run_cli("replay", "--trace", str(trace)) == EXIT_FAIL
    assert "replay mismatch" in capsys.readouterr().err


def test_evaluate_writes_report(tmp_path, capsys):
    report = tmp_path / "report.json"
    code = run_cli("evaluate", "--agent", "oracle", "--suite-size", "5",
                   "--seed", "2", "--out", str(report))
    assert code == EXIT_OK
    payload = json.loads(report.read_text())
    assert payload["report"]["episodes"] == 5
    assert payload["report"]["success_rate"] == 1.0
    assert "avg reward excl. success bonus" in capsys.readouterr().out


def test_evaluate_empty_suite_is_usage_error(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code = run_cli("evaluate", "--agent", "oracle", "--suite", str(empty))
    assert code == EXIT_USAGE


def test_evaluate_pattern_steps_table(capsys):
    code = run_cli("evaluate", "--agent", "oracle", "--suite-size", "4",
                   "--pattern", "3t1r1s", "--seed", "5")
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "step | cumulative reward" in out


def test_baseline_default_table(capsys):
    assert run_cli("baseline", "--mc-trials", "50000") == EXIT_OK
    out = capsys.readouterr().out
    for value in ("0.250", "0.463", "0.641", "0.790", "0.912"):
        assert value in out
    assert "PASS" in out


def test_baseline_skip_mc(capsys):
    assert run_cli("baseline", "--mc-trials", "0") == EXIT_OK
    assert "cross-check" not in capsys.readouterr().out


def test_baseline_alternate_parameters(capsys):
    from shapegrid.analytics import RandomPolicyModel, expected_step_reward
    from shapegrid.cli import _canonical_plan
    from shapegrid.rewards import FIGURE2
    from dataclasses import replace

    assert run_cli("baseline", "--lambda", "0", "--space", "11",
                   "--mc-trials", "0") == EXIT_OK
    out = capsys.readouterr().out
    assert "|A|=11" in out and "lambda=0.0" in out
    model = RandomPolicyModel(
        plan=_canonical_plan("3t1r1s"),
        profile=replace(FIGURE2, name="figure2-custom", invalid_penalty=0.0),
        action_space_size=11,
    )
    expected = expected_step_reward(model, 1)
    assert f"{expected:9.4f}" in out


def test_shapes_export(tmp_path, capsys):
    out = tmp_path / "shapes"
    assert run_cli("shapes", "export", "--dir", str(out)) == EXIT_OK
    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*.txt"))
    assert len(files) == 72
    assert "chevron/000_0.txt" in files
    assert "tee/315_-1.txt" in files


def test_config_file_and_env_precedence(tmp_path, capsys, monkeypatch):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"seed": 21, "mode": "static"}))
    monkeypatch.setenv("SHAPEGRID_SEED", "99")
    out = tmp_path / "suite.jsonl"
    assert run_cli("gen-suite", "--size", "1", "--config", str(config),
                   "--out", str(out)) == EXIT_OK
    echoed = capsys.readouterr().err
    effective = json.loads(echoed.split("config: ", 1)[1].splitlines()[0])
    assert effective["seed"] == 21  # config beats env
    assert effective["mode"] == "static"

    assert run_cli("gen-suite", "--size", "1", "--config", str(config),
                   "--seed", "5", "--out", str(out)) == EXIT_OK
    echoed = capsys.readouterr().err
    effective = json.loads(echoed.split("config: ", 1)[1].splitlines()[0])
    assert effective["seed"] == 5  # flag beats config


def test_env_seed_applies_without_config(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SHAPEGRID_SEED", "314")
    out = tmp_path / "suite.jsonl"
    assert run_cli("gen-suite", "--size", "1", "--out", str(out)) == EXIT_OK
    effective = json.loads(
        capsys.readouterr().err.split("config: ", 1)[1].splitlines()[0]
    )
    assert effective["seed"] == 314


def test_bad_grid_is_usage_error(tmp_path, capsys):
    code = run_cli("gen-suite", "--size", "1", "--grid", "banana",
                   "--out", str(tmp_path / "s.jsonl"))
    assert code == EXIT_USAGE


def test_version_flag(capsys):
    with pytest.raises(SystemExit):
        run_cli("--version")
    assert "shapegrid" in capsys.readouterr().out


def test_config_file_custom_profile(tmp_path, capsys):
    config = tmp_path / "custom.json"
    config.write_text(json.dumps({
        "profile": {"name": "lenient", "invalid_penalty": 0.0,
                    "penalty_convention": "per-type"},
    }))
    code = run_cli("run", "--agent", "script:no_rotation", "--scenario-seed", "7",
                   "--config", str(config))
    assert code == EXIT_FAIL  # horizon exhausted, but with zero penalties
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["total_reward"] == 0.0


def test_gen_dataset_rationale_stub_flag(tmp_path, capsys):
    out = tmp_path / "d.jsonl"
    assert run_cli("gen-dataset", "--n", "3", "--seed", "2", "--out", str(out),
                   "--rationale-stub", "Answer: ") == EXIT_OK
    row = json.loads(out.read_text().splitlines()[1])
    assert row["completion"].startswith("Answer: <answer>")
