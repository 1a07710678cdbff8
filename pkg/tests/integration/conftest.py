import os
from pathlib import Path

import pytest


@pytest.fixture
def ml100k() -> Path:
    try:
        path = Path(os.environ["MMF_ML100K"])
    except KeyError:
        pytest.skip("integration test requires MMF_ML100K (path to ml-100k/u.data)")
    if not path.exists():
        pytest.skip(f"{path} does not exist")
    return path
