"""Prompt construction for both evaluation modes.

The two system templates are committed as text assets and used verbatim;
only the ``{analyzed}`` slot is filled, with the comma-joined action
history. The shape pair is appended as a TARGET/CURRENT block bounded by
a 30-dash separator, matching the stock environment layout.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources
from typing import Sequence

DYNAMIC = "dynamic"
STATIC = "static"
MODES = (DYNAMIC, STATIC)

ANALYZED_SLOT = "{analyzed}"
TARGET_HEADER = "TARGET (Shape A):"
CURRENT_HEADER = "CURRENT (Shape B):"
BLOCK_SEPARATOR = "-" * 30

_TEMPLATE_FILES = {
    DYNAMIC: "dynamic_system.txt",
    STATIC: "static_system.txt",
}


@lru_cache(maxsize=None)
def _asset(name: str) -> str:
    path = resources.files("shapegrid").joinpath("data", "prompts", name)
    return path.read_text(encoding="utf-8")


def system_template(mode: str) -> str:
    """The unfilled system template for a mode."""
    try:
        return _asset(_TEMPLATE_FILES[mode])
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}") from None


def sample_environment() -> str:
    """The stock TARGET/CURRENT example block (used by tests and docs)."""
    return _asset("sample_environment.txt")


def join_history(history: Sequence[str]) -> str:
    return ", ".join(history)


def environment_block(target_ascii: str, current_ascii: str) -> str:
    """TARGET/CURRENT renders plus the separator; renders end in newlines."""
    return (
        f"{TARGET_HEADER}\n{target_ascii}"
        f"{CURRENT_HEADER}\n{current_ascii}"
        f"{BLOCK_SEPARATOR}\n"
    )


def build_prompt(
    mode: str,
    target_ascii: str,
    current_ascii: str,
    history: Sequence[str],
) -> str:
    filled = system_template(mode).replace(ANALYZED_SLOT, join_history(history))
    return filled + environment_block(target_ascii, current_ascii)
