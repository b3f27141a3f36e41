import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from locktime import load_bundled


@pytest.fixture(scope="session")
def c17():
    return load_bundled("c17")


@pytest.fixture(scope="session")
def mid12():
    return load_bundled("mid12")
