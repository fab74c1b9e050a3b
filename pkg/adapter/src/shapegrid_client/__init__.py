"""Thin reset/step client for an engine-hosted puzzle session.

The engine process owns all game logic; this package only moves JSON
lines across a pipe or socket, so training loops can drive episodes with
the conventional environment interface.
"""

__version__ = "0.1.0"

from .env import EngineSession, ProtocolError, SessionClosedError, StepResult

__all__ = ["EngineSession", "ProtocolError", "SessionClosedError", "StepResult"]
