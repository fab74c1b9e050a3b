import pytest

from shapegrid.geometry import DEFAULT_GRID
from shapegrid.shapes import default_library


@pytest.fixture(scope="session")
def library():
    return default_library()


@pytest.fixture(scope="session")
def grid():
    return DEFAULT_GRID
