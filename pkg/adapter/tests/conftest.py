import sys

import pytest


def engine_command(*extra: str) -> list[str]:
    return [sys.executable, "-m", "shapegrid.cli", "serve", *extra]


@pytest.fixture
def engine_cmd():
    return engine_command
