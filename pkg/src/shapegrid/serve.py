"""Engine-hosted sessions: the client drives episodes over the wire.

This inverts the usual loop direction — instead of the engine calling an
agent, a client (e.g. an RL training process) sends line-delimited JSON
requests and receives prompts and rewards:

    {"op": "reset", "scenario_seed": 7, "mode": "dynamic"}
      -> {"prompt": ..., "reward": 0.0, "done": false,
          "info": {"iou": ..., "step": 0, "outcome": null}}
    {"op": "step", "action": "<raw model text>"}
      -> {"prompt": ..., "reward": r_t, "done": ..., "info": {...}}

The step reward on a terminal success includes the success bonus (clients
see the full return without a second read). Sessions alternate strictly:
reset, then steps until done; anything else earns a typed error response.
"""

from __future__ import annotations

import json
import socketserver
import sys

from .episode import Episode, EpisodeConfig
from .generate import gen_scenario
from .geometry import DEFAULT_GRID, GridSpec
from .prompts import DYNAMIC, MODES
from .rewards import DEFAULT_PROFILE, RewardProfile
from .shapes import DEFAULT_SHAPE, ShapeLibrary, default_library


def _error(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


class SessionServer:
    """One live episode at a time, driven by reset/step requests."""

    def __init__(
        self,
        grid: GridSpec = DEFAULT_GRID,
        horizon: int = 5,
        iou_threshold: float = 0.9,
        profile: RewardProfile = DEFAULT_PROFILE,
        default_mode: str = DYNAMIC,
        max_distance: int = 5,
        shape_id: str = DEFAULT_SHAPE,
        label_cap: int | None = 2,
        library: ShapeLibrary | None = None,
    ):
        self.grid = grid
        self.horizon = horizon
        self.iou_threshold = iou_threshold
        self.profile = profile
        self.default_mode = default_mode
        self.max_distance = max_distance
        self.shape_id = shape_id
        self.label_cap = label_cap
        self.library = library or default_library()
        self.episode: Episode | None = None

    def _info(self) -> dict:
        assert self.episode is not None
        return {
            "iou": self.episode.current_iou(),
            "step": self.episode.t,
            "outcome": self.episode.outcome,
        }

    def handle(self, request: dict) -> dict:
        if not isinstance(request, dict):
            return _error("bad_request", "request must be a JSON object")
        op = request.get("op")
        if op == "reset":
            return self._reset(request)
        if op == "step":
            return self._step(request)
        return _error("bad_request", f"unknown op {op!r}")

    def _reset(self, request: dict) -> dict:
        if self.episode is not None and not self.episode.done:
            return _error(
                "protocol_violation", "reset during an active episode"
            )
        if "scenario_seed" not in request:
            return _error("bad_request", "reset requires scenario_seed")
        mode = request.get("mode", self.default_mode)
        if mode not in MODES:
            return _error("bad_request", f"unknown mode {mode!r}")
        seed = int(request["scenario_seed"])
        scenario = gen_scenario(
            seed,
            max_distance=self.max_distance,
            grid=self.grid,
            shape_id=self.shape_id,
            library=self.library,
            tau=self.iou_threshold,
            label_cap=self.label_cap,
        )
        config = EpisodeConfig(
            grid=self.grid,
            horizon=self.horizon,
            iou_threshold=self.iou_threshold,
            mode=mode,
            profile=self.profile,
        )
        self.episode = Episode(scenario, config, library=self.library, seed=seed)
        done = self.episode.done
        reward = self.profile.success_bonus if done and self.episode.success else 0.0
        return {
            "prompt": None if done else self.episode.prompt(),
            "reward": reward,
            "done": done,
            "info": self._info(),
        }

    def _step(self, request: dict) -> dict:
        if self.episode is None:
            return _error("protocol_violation", "step before reset")
        if self.episode.done:
            return _error("protocol_violation", "step after terminal")
        action = request.get("action")
        if not isinstance(action, str):
            return _error("bad_request", "step requires an 'action' text field")
        result = self.episode.step_text(action)
        reward = result.reward
        if result.done and self.episode.success:
            reward += self.profile.success_bonus
        return {
            "prompt": None if result.done else self.episode.prompt(),
            "reward": reward,
            "done": result.done,
            "info": self._info(),
        }

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps(_error("bad_request", f"invalid JSON: {exc}"), sort_keys=True)
        return json.dumps(self.handle(request), sort_keys=True)

    def run_stdio(self, stdin=None, stdout=None) -> None:
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout
        for line in stdin:
            if not line.strip():
                continue
            stdout.write(self.handle_line(line) + "\n")
            stdout.flush()

    def run_tcp(self, host: str, port: int, ready_out=None) -> None:
        """Serve one connection at a time; each connection is one session."""
        server_self = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self) -> None:
                server_self.episode = None
                for raw in self.rfile:
                    line = raw.decode("utf-8")
                    if not line.strip():
                        continue
                    response = server_self.handle_line(line)
                    self.wfile.write((response + "\n").encode("utf-8"))

        with socketserver.TCPServer((host, port), Handler) as server:
            if ready_out is not None:
                ready_out.write(f"listening {server.server_address[0]}:{server.server_address[1]}\n")
                ready_out.flush()
            server.serve_forever()
