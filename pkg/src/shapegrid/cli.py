"""Command-line surface: generation, episodes, evaluation, baselines.

Exit codes: 0 ok (or success-terminal episode), 1 horizon-exhausted episode
or failed cross-check/replay, 2 generation error, 3 agent channel error,
64 usage error. Flag values beat config-file values beat the SHAPEGRID_SEED
environment variable (base seed only) beat built-in defaults; the effective
configuration is echoed to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__, analytics, generate
from .agents import agent_from_spec
from .episode import (
    AGENT_ERROR,
    HORIZON_EXHAUSTED,
    EpisodeConfig,
    ReplayMismatchError,
    read_trace,
    replay,
    run_episode,
    write_trace,
)
from .generate import GenerationError
from .geometry import DEFAULT_GRID, GridSpec
from .prompts import DYNAMIC, MODES
from .rewards import QuotaPlan, profile_by_name
from .serve import SessionServer
from .shapes import DEFAULT_SHAPE, default_library

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_GENERATION = 2
EXIT_AGENT = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


def _parse_grid(text: str) -> GridSpec:
    try:
        w, h = text.lower().split("x")
        return GridSpec(width=int(w), height=int(h))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"bad grid spec {text!r}, expected WxH: {exc}") from None


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return obj


def _effective(args: argparse.Namespace, key: str, default, config: dict):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    if key == "seed":
        env = os.environ.get("SHAPEGRID_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError:
                raise UsageError(f"SHAPEGRID_SEED must be an integer, got {env!r}") from None
    return default


class Settings:
    """Effective per-run settings after flag/config/env resolution."""

    def __init__(self, args: argparse.Namespace):
        config = _load_config_file(getattr(args, "config", None))
        grid_text = _effective(args, "grid", None, config)
        self.grid = _parse_grid(grid_text) if grid_text else DEFAULT_GRID
        self.seed = int(_effective(args, "seed", 0, config))
        self.shape = str(_effective(args, "shape", DEFAULT_SHAPE, config))
        self.mode = str(_effective(args, "mode", DYNAMIC, config))
        profile_value = _effective(args, "profile", "figure2", config)
        self.horizon = int(_effective(args, "horizon", 5, config))
        self.tau = float(_effective(args, "tau", 0.9, config))
        self.max_distance = int(_effective(args, "max_distance", 5, config))
        cap = _effective(args, "label_cap", 2, config)
        self.label_cap = None if cap in (None, "none", "off") else int(cap)
        self.jobs = int(_effective(args, "jobs", 1, config))
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}")
        # a config file may define a full custom profile as an object;
        # the CLI flag selects built-ins by name
        if isinstance(profile_value, dict):
            from .rewards import RewardProfile

            self.profile = RewardProfile.from_json(profile_value)
            self.profile_name = self.profile.name
        else:
            self.profile_name = str(profile_value)
            self.profile = profile_by_name(self.profile_name)

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(
            grid=self.grid,
            horizon=self.horizon,
            iou_threshold=self.tau,
            mode=self.mode,
            profile=self.profile,
        )

    def to_json(self) -> dict:
        return {
            "grid": self.grid.to_json(),
            "seed": self.seed,
            "shape": self.shape,
            "mode": self.mode,
            "profile": self.profile_name,
            "horizon": self.horizon,
            "tau": self.tau,
            "max_distance": self.max_distance,
            "label_cap": self.label_cap,
            "jobs": self.jobs,
        }

    def echo(self) -> None:
        print(f"shapegrid {__version__} config: {json.dumps(self.to_json(), sort_keys=True)}",
              file=sys.stderr)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (flags win over it)")
    parser.add_argument("--grid", help="grid size as WxH (default 27x27)")
    parser.add_argument("--seed", type=int, help="base seed (env SHAPEGRID_SEED)")
    parser.add_argument("--shape", help="shape id (default chevron)")
    parser.add_argument("--profile", help="reward profile name (default figure2)")
    parser.add_argument("--horizon", type=int, help="episode horizon (default 5)")
    parser.add_argument("--tau", type=float, help="IoU success threshold (default 0.9)")
    parser.add_argument("--mode", choices=MODES, help="dynamic or static")
    parser.add_argument("--max-distance", type=int, dest="max_distance",
                        help="max start-target distance (default 5)")
    parser.add_argument("--label-cap", dest="label_cap",
                        help="per-label quota cap for generation (int or 'none')")
    parser.add_argument("--jobs", type=int, help="parallel workers (default 1)")


def _scenario_for_run(args: argparse.Namespace, st: Settings):
    if args.suite:
        scenarios = generate.read_suite(Path(args.suite))
        if not scenarios:
            raise UsageError(f"suite file {args.suite} holds no scenarios")
        if not 0 <= args.index < len(scenarios):
            raise UsageError(f"--index {args.index} outside suite of {len(scenarios)}")
        return scenarios[args.index]
    seed = args.scenario_seed if args.scenario_seed is not None else st.seed
    return generate.gen_scenario(
        seed,
        max_distance=st.max_distance,
        grid=st.grid,
        shape_id=st.shape,
        tau=st.tau,
        label_cap=st.label_cap,
        pattern=args.pattern,
    )


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    st = Settings(args)
    st.echo()
    settings = {**st.to_json(), "n": args.n, "include_noops": not args.no_noops,
                "format": "chat" if args.chat_format else "jsonl",
                "rationale_stub": args.rationale_stub}
    try:
        samples = generate.gen_dataset(
            n=args.n,
            seed=st.seed,
            include_noops=not args.no_noops,
            grid=st.grid,
            shape_id=st.shape,
            tau=st.tau,
        )
        for sample in samples:
            generate.verify_sample(sample)
    except GenerationError as exc:
        print(f"generation failed after {exc.achieved} samples: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    count = generate.write_dataset(
        samples, Path(args.out), st.seed, settings,
        chat_format=args.chat_format, rationale_stub=args.rationale_stub,
    )
    print(f"wrote {count} samples to {args.out}")
    return EXIT_OK


def cmd_gen_suite(args: argparse.Namespace) -> int:
    st = Settings(args)
    st.echo()
    settings = {**st.to_json(), "size": args.size, "pattern": args.pattern}
    try:
        scenarios = generate.gen_suite(
            size=args.size,
            seed=st.seed,
            max_distance=st.max_distance,
            grid=st.grid,
            shape_id=st.shape,
            tau=st.tau,
            label_cap=st.label_cap,
            pattern=args.pattern,
        )
    except GenerationError as exc:
        print(f"generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    count = generate.write_suite(scenarios, Path(args.out), st.seed, settings)
    print(f"wrote {count} scenarios to {args.out}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    st = Settings(args)
    st.echo()
    scenario = _scenario_for_run(args, st)
    config = st.episode_config()
    agent = agent_from_spec(
        args.agent,
        episode_seed=scenario.seed,
        mode=st.mode,
        temperature=args.temperature,
        timeout=args.timeout,
    )
    try:
        record = run_episode(scenario, config, agent, seed=st.seed)
    finally:
        close = getattr(agent, "close", None)
        if close is not None:
            close()
    if args.trace:
        write_trace(record, Path(args.trace), library=default_library())
        print(f"trace written to {args.trace}", file=sys.stderr)
    print(json.dumps({
        "outcome": record.outcome,
        "success": record.success,
        "steps": len(record.steps),
        "total_reward": record.total_reward,
        "final_iou": record.final_iou,
        "actions": list(record.actions),
    }, sort_keys=True))
    if record.outcome == AGENT_ERROR:
        return EXIT_AGENT
    if record.outcome == HORIZON_EXHAUSTED:
        return EXIT_FAIL
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    st = Settings(args)
    st.echo()
    if args.suite:
        scenarios = generate.read_suite(Path(args.suite))
        if not scenarios:
            raise UsageError(f"suite file {args.suite} holds no scenarios")
    else:
        scenarios = generate.gen_suite(
            size=args.suite_size,
            seed=st.seed,
            max_distance=st.max_distance,
            grid=st.grid,
            shape_id=st.shape,
            tau=st.tau,
            label_cap=st.label_cap,
            pattern=args.pattern,
        )
    config = st.episode_config()
    if args.no_repetition:
        from dataclasses import replace as dc_replace

        config = dc_replace(
            config,
            profile=dc_replace(
                config.profile,
                name=f"{config.profile.name}-norep",
                repetition_penalty=0.0,
            ),
        )
    report = analytics.evaluate(args.agent, scenarios, config, jobs=st.jobs)
    if args.out:
        analytics.write_report(report, Path(args.out), st.seed,
                               {**st.to_json(), "agent": args.agent})
        print(f"report written to {args.out}", file=sys.stderr)
    sys.stdout.write(report.format_text())
    return EXIT_OK


def _canonical_plan(pattern: str) -> QuotaPlan:
    """Fixed-label quota plan realizing a per-type pattern (for baselines)."""
    from . import actions

    counts = generate.parse_pattern(pattern)
    quotas: dict[str, int] = {}
    trans = counts[actions.TRANS]
    if trans:
        down = (trans + 1) // 2
        right = trans - down
        quotas["down"] = down
        if right:
            quotas["right"] = right
    if counts[actions.ROT]:
        quotas[actions.QUARTER_ROTATION] = counts[actions.ROT]
    if counts[actions.SCALE]:
        quotas[actions.DOUBLE_SIZE] = counts[actions.SCALE]
    return QuotaPlan(quotas=quotas)


def cmd_baseline(args: argparse.Namespace) -> int:
    from dataclasses import replace as dc_replace

    st = Settings(args)
    st.echo()
    plan = _canonical_plan(args.pattern)
    profile = st.profile
    if args.invalid_penalty is not None:
        profile = dc_replace(profile, name=f"{profile.name}-custom",
                             invalid_penalty=args.invalid_penalty)
    model = analytics.RandomPolicyModel(
        plan=plan,
        profile=profile,
        action_space_size=args.space,
        horizon=args.k,
    )
    table = analytics.baseline_table(
        model,
        mc_trials=args.mc_trials,
        seed=st.seed,
        literal_form=args.literal_form,
        with_repetition=args.with_repetition,
    )
    sys.stdout.write(analytics.format_baseline_table(table))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump({"kind": "baseline", "tool": "shapegrid",
                       "version": __version__, "seed": st.seed,
                       "settings": st.to_json(), "table": table},
                      fh, sort_keys=True, indent=2)
            fh.write("\n")
    if args.mc_trials > 0 and not table["crosscheck_ok"]:
        print("analytic/Monte-Carlo cross-check FAILED", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    record = read_trace(Path(args.trace))
    try:
        replay(record)
    except ReplayMismatchError as exc:
        print(f"replay mismatch: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(f"trace {args.trace} replays cleanly "
          f"({len(record.steps)} steps, total {record.total_reward})")
    return EXIT_OK


def cmd_shapes_export(args: argparse.Namespace) -> int:
    library = default_library()
    written = library.export(Path(args.dir))
    print(f"exported {len(written)} raster files to {args.dir}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    st = Settings(args)
    st.echo()
    server = SessionServer(
        grid=st.grid,
        horizon=st.horizon,
        iou_threshold=st.tau,
        profile=st.profile,
        default_mode=st.mode,
        max_distance=st.max_distance,
        shape_id=st.shape,
        label_cap=st.label_cap,
    )
    if args.port is not None:
        server.run_tcp(args.host, args.port, ready_out=sys.stderr)
    else:
        server.run_stdio()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shapegrid",
        description="Deterministic ASCII-grid shape-transformation puzzles: "
                    "datasets, episodes, evaluation, analytic baselines.",
    )
    parser.add_argument("--version", action="version", version=f"shapegrid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate the single-action training set")
    _add_common(p)
    p.add_argument("--n", type=int, default=generate.DEFAULT_DATASET_SIZE)
    p.add_argument("--out", default="dataset.jsonl")
    p.add_argument("--chat-format", action="store_true",
                   help="emit chat messages instead of prompt/completion")
    p.add_argument("--no-noops", action="store_true",
                   help="exclude identity labels from the label pool")
    p.add_argument("--rationale-stub", dest="rationale_stub", default="",
                   help="fixed text prepended to every completion")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("gen-suite", help="generate an evaluation scenario suite")
    _add_common(p)
    p.add_argument("--size", type=int, default=100)
    p.add_argument("--pattern", help="per-type counts, e.g. 3t1r1s")
    p.add_argument("--out", default="suite.jsonl")
    p.set_defaults(func=cmd_gen_suite)

    p = sub.add_parser("run", help="run one closed-loop episode")
    _add_common(p)
    p.add_argument("--agent", required=True,
                   help="oracle | random[:seed=N,space=...] | script:a,b | cmd:... | tcp:host:port")
    p.add_argument("--scenario-seed", type=int, dest="scenario_seed")
    p.add_argument("--suite", help="load the scenario from a suite file")
    p.add_argument("--index", type=int, default=0, help="scenario index in --suite")
    p.add_argument("--pattern", help="per-type counts for a generated scenario")
    p.add_argument("--trace", help="write a replayable JSONL trace here")
    p.add_argument("--timeout", type=float, default=120.0,
                   help="per-step agent timeout in seconds")
    p.add_argument("--temperature", type=float, default=0.0,
                   help="temperature_hint sent to external agents "
                        "(trainers anneal 1.4 to 0.7; evaluation is greedy)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="run an agent over a scenario suite")
    _add_common(p)
    p.add_argument("--agent", required=True)
    p.add_argument("--suite", help="suite file (otherwise generated)")
    p.add_argument("--suite-size", type=int, dest="suite_size", default=100)
    p.add_argument("--pattern", help="restrict generated scenarios to a pattern")
    p.add_argument("--no-repetition", action="store_true", dest="no_repetition",
                   help="disable the repetition penalty (random-baseline parity)")
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="analytic random-policy expected rewards")
    _add_common(p)
    p.add_argument("--pattern", default="3t1r1s")
    p.add_argument("--space", type=int, default=analytics.DEFAULT_SPACE_SIZE,
                   help="action space size (8 effective, 11 full)")
    p.add_argument("--lambda", type=float, dest="invalid_penalty", default=None,
                   help="invalid-action penalty override")
    p.add_argument("--k", type=int, default=5, help="horizon")
    p.add_argument("--mc-trials", type=int, dest="mc_trials", default=200_000,
                   help="Monte-Carlo cross-check trials (0 skips)")
    p.add_argument("--literal-form", action="store_true",
                   help="use the uncorrected closed form (documentation only)")
    p.add_argument("--with-repetition", action="store_true",
                   help="include the repetition penalty in the Monte Carlo run")
    p.add_argument("--out", help="write the JSON table here")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("replay", help="verify a trace file replays bit-identically")
    p.add_argument("--trace", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("shapes", help="shape library utilities")
    shapes_sub = p.add_subparsers(dest="shapes_command", required=True)
    pe = shapes_sub.add_parser("export", help="export golden rasters as text files")
    pe.add_argument("--dir", default="shapes")
    pe.set_defaults(func=cmd_shapes_export)

    p = sub.add_parser("serve", help="host client-driven sessions over stdio or TCP")
    _add_common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, help="listen on TCP instead of stdio")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
