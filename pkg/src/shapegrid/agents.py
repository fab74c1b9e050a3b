"""Built-in agents and the external-agent wire protocol.

An agent is anything with ``act(prompt, step_index) -> str | None`` (None
means the channel produced nothing in time, which the episode scores as an
unanswered step). Built-ins cover the random baseline, a quota-following
oracle, and scripted sequences; external agents speak line-delimited JSON
over a spawned process's standard streams or a TCP socket:

    request  {"episode_id", "step", "prompt", "mode", "temperature_hint"}
    response {"text"}

One endpoint serves one episode at a time; requests strictly alternate
with responses.
"""

from __future__ import annotations

import json
import shlex
import socket
import subprocess
import threading
from queue import Empty, Queue

from . import actions
from .episode import AgentChannelError, Episode
from .rewards import derive_quota_plan

DEFAULT_TIMEOUT = 120.0

EFFECTIVE_SPACE = "effective"
FULL_SPACE = "full"

_SPACES = {
    EFFECTIVE_SPACE: actions.EFFECTIVE_LABELS,
    FULL_SPACE: actions.ALL_LABELS,
}


def temperature_hint(start: float, end: float, fraction: float) -> float:
    """Linear anneal position for trainer clients; the engine never samples."""
    fraction = min(max(fraction, 0.0), 1.0)
    return start + (end - start) * fraction


class RandomAgent:
    """Uniform labels over the effective (default) or full vocabulary."""

    def __init__(self, seed: int, space: str = EFFECTIVE_SPACE):
        if space not in _SPACES:
            raise ValueError(f"unknown action space {space!r}")
        from .seeding import rng_for

        self.labels = _SPACES[space]
        self.rng = rng_for(seed, "random-agent")

    def act(self, prompt: str, step_index: int) -> str:
        label = self.labels[int(self.rng.integers(0, len(self.labels)))]
        return actions.answer_text(label)


class GreedyOracleAgent:
    """Engine-side oracle: reads the true state and spends the quota plan.

    Each step it re-derives the remaining plan from the live state and picks
    a label whose type was least recently used, which yields type-diverse
    sequences (scaling first, then alternating into translations/rotation).
    """

    _TYPE_ORDER = (actions.SCALE, actions.TRANS, actions.ROT)

    def __init__(self):
        self._episode: Episode | None = None
        self._last_use: dict[str, int] = {}

    def begin(self, episode: Episode) -> None:
        self._episode = episode
        self._last_use = {}

    def act(self, prompt: str, step_index: int) -> str:
        if self._episode is None:
            raise AgentChannelError("oracle agent used without an episode")
        plan = derive_quota_plan(self._episode.state, self._episode.scenario.target)
        if not plan.quotas:
            # Nothing left to do; the only safe filler is an identity label.
            return actions.answer_text(actions.NO_TRANSLATION)
        kinds = {actions.LABEL_TYPE[label] for label in plan.quotas}
        kind = min(
            kinds,
            key=lambda k: (self._last_use.get(k, 0), self._TYPE_ORDER.index(k)),
        )
        candidates = [l for l in plan.quotas if actions.LABEL_TYPE[l] == kind]
        label = max(candidates, key=lambda l: (plan.quotas[l], l))
        self._last_use[kind] = step_index
        return actions.answer_text(label)


class ScriptedAgent:
    """Replays a fixed list of raw texts; empty text after exhaustion."""

    def __init__(self, texts: list[str]):
        self.texts = list(texts)
        self._i = 0

    def act(self, prompt: str, step_index: int) -> str:
        if self._i >= len(self.texts):
            return ""
        text = self.texts[self._i]
        self._i += 1
        return text


class _WireAgent:
    """Shared request/response framing over a line-oriented channel."""

    def __init__(self, episode_id: str, mode: str, temperature: float, timeout: float):
        self.episode_id = episode_id
        self.mode = mode
        self.temperature = temperature
        self.timeout = timeout

    def _request(self, prompt: str, step_index: int) -> str:
        return json.dumps(
            {
                "episode_id": self.episode_id,
                "step": step_index,
                "prompt": prompt,
                "mode": self.mode,
                "temperature_hint": self.temperature,
            },
            sort_keys=True,
        )

    @staticmethod
    def _parse_response(line: str) -> str:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AgentChannelError(f"agent sent invalid JSON: {exc}") from exc
        if not isinstance(obj, dict) or "text" not in obj:
            raise AgentChannelError("agent response missing 'text' field")
        return str(obj["text"])


class ExternalProcessAgent(_WireAgent):
    """Spawns a command and exchanges one JSON line per step on its stdio."""

    def __init__(
        self,
        command: str,
        episode_id: str = "",
        mode: str = "dynamic",
        temperature: float = 0.0,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        super().__init__(episode_id, mode, temperature, timeout)
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: Queue[str | None] = Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def act(self, prompt: str, step_index: int) -> str | None:
        if self.proc.poll() is not None:
            raise AgentChannelError("agent process exited")
        try:
            self.proc.stdin.write(self._request(prompt, step_index) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AgentChannelError(f"agent stdin closed: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.timeout)
        except Empty:
            return None  # timeout: the step is scored as unanswered
        if line is None:
            raise AgentChannelError("agent closed its stdout")
        return self._parse_response(line)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class TcpAgent(_WireAgent):
    """Same framing as ExternalProcessAgent over a TCP connection."""

    def __init__(
        self,
        host: str,
        port: int,
        episode_id: str = "",
        mode: str = "dynamic",
        temperature: float = 0.0,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        super().__init__(episode_id, mode, temperature, timeout)
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise AgentChannelError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.settimeout(timeout)
        self._fh = self.sock.makefile("rw", encoding="utf-8", newline="\n")

    def act(self, prompt: str, step_index: int) -> str | None:
        try:
            self._fh.write(self._request(prompt, step_index) + "\n")
            self._fh.flush()
            line = self._fh.readline()
        except socket.timeout:
            return None
        except OSError as exc:
            raise AgentChannelError(f"socket failure: {exc}") from exc
        if not line:
            raise AgentChannelError("agent closed the connection")
        return self._parse_response(line)

    def close(self) -> None:
        try:
            self._fh.close()
            self.sock.close()
        except OSError:
            pass


def agent_from_spec(
    spec: str,
    episode_seed: int = 0,
    mode: str = "dynamic",
    temperature: float = 0.0,
    timeout: float = DEFAULT_TIMEOUT,
    episode_id: str = "",
):
    """Build an agent from a CLI spec string.

    Specs: ``oracle``, ``random[:seed=N][,space=effective|full]``,
    ``script:<label,label,...>``, ``cmd:<command line>``, ``tcp:host:port``.
    The seed inside a random spec is a base seed; each episode derives its
    own stream from (base, episode_seed) so parallel runs stay reproducible.
    """
    if spec == "oracle":
        return GreedyOracleAgent()
    if spec == "random" or spec.startswith("random:"):
        base, space = 0, EFFECTIVE_SPACE
        if ":" in spec:
            for part in spec.split(":", 1)[1].split(","):
                if not part:
                    continue
                key, _, value = part.partition("=")
                if key == "seed":
                    base = int(value)
                elif key == "space":
                    space = {"8": EFFECTIVE_SPACE, "11": FULL_SPACE}.get(value, value)
                else:
                    raise ValueError(f"unknown random-agent option {key!r}")
        from .seeding import derive_seed

        return RandomAgent(derive_seed(base, "episode", episode_seed), space=space)
    if spec.startswith("script:"):
        labels = [s.strip() for s in spec.split(":", 1)[1].split(",") if s.strip()]
        return ScriptedAgent([actions.answer_text(label) for label in labels])
    if spec.startswith("cmd:"):
        return ExternalProcessAgent(
            spec.split(":", 1)[1],
            episode_id=episode_id,
            mode=mode,
            temperature=temperature,
            timeout=timeout,
        )
    if spec.startswith("tcp:"):
        _, host, port = spec.split(":", 2)
        return TcpAgent(
            host,
            int(port),
            episode_id=episode_id,
            mode=mode,
            temperature=temperature,
            timeout=timeout,
        )
    raise ValueError(f"unknown agent spec {spec!r}")
