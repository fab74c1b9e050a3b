"""Client-side session transport: spawn or dial an engine, then reset/step.

One request line out, one response line back, strictly alternating:

    {"op": "reset", "scenario_seed": 7, "mode": "dynamic"}
    {"op": "step", "action": "<raw model text>"}

Responses carry {prompt, reward, done, info{iou, step, outcome}}; error
responses raise ProtocolError. The adapter holds no puzzle logic at all.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
from dataclasses import dataclass

DEFAULT_COMMAND = "shapegrid serve"


class ProtocolError(RuntimeError):
    """The engine rejected a request (typed error response)."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class SessionClosedError(RuntimeError):
    """The engine went away mid-session."""


@dataclass(frozen=True)
class StepResult:
    prompt: str | None
    reward: float
    done: bool
    info: dict


class EngineSession:
    """One live episode against an engine process or TCP endpoint.

    Exactly one of ``command`` (spawn over stdio) or ``address`` (connect
    to a serving engine) is used; ``command`` wins when both are given.
    """

    def __init__(
        self,
        command: str | list[str] | None = DEFAULT_COMMAND,
        address: tuple[str, int] | None = None,
        timeout: float = 60.0,
    ):
        self._proc = None
        self._sock = None
        if address is not None and command is None:
            self._sock = socket.create_connection(address, timeout=timeout)
            self._sock.settimeout(timeout)
            self._fh = self._sock.makefile("rw", encoding="utf-8", newline="\n")
        else:
            argv = shlex.split(command) if isinstance(command, str) else list(command)
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        self._active = False

    # --- wire plumbing -----------------------------------------------------

    def _roundtrip(self, request: dict) -> dict:
        line = json.dumps(request, sort_keys=True)
        if self._proc is not None:
            if self._proc.poll() is not None:
                raise SessionClosedError("engine process exited")
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
                raw = self._proc.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise SessionClosedError(f"engine pipe failed: {exc}") from exc
        else:
            try:
                self._fh.write(line + "\n")
                self._fh.flush()
                raw = self._fh.readline()
            except OSError as exc:
                raise SessionClosedError(f"engine socket failed: {exc}") from exc
        if not raw:
            raise SessionClosedError("engine closed the channel")
        response = json.loads(raw)
        if "error" in response:
            err = response["error"]
            raise ProtocolError(str(err.get("code")), str(err.get("message")))
        return response

    # --- environment surface -------------------------------------------------

    def reset(self, scenario_seed: int, mode: str = "dynamic") -> str | None:
        """Start an episode; returns the first prompt (None if already done)."""
        response = self._roundtrip(
            {"op": "reset", "scenario_seed": scenario_seed, "mode": mode}
        )
        self._active = not response["done"]
        return response["prompt"]

    def step(self, action_text: str) -> StepResult:
        """Send raw model text; the engine parses and advances the episode."""
        response = self._roundtrip({"op": "step", "action": action_text})
        result = StepResult(
            prompt=response["prompt"],
            reward=float(response["reward"]),
            done=bool(response["done"]),
            info=dict(response["info"]),
        )
        if result.done:
            self._active = False
        return result

    @property
    def active(self) -> bool:
        return self._active

    def close(self) -> None:
        if self._proc is not None:
            if self._proc.poll() is None:
                self._proc.stdin.close()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
            self._proc = None
        if self._sock is not None:
            try:
                self._fh.close()
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self) -> "EngineSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
