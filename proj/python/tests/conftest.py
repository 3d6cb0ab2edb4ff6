import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("TAGTEAM_CLI")
    if not path:
        candidate = pathlib.Path(__file__).resolve().parents[2] / "build" / "tools" / "tagteam"
        path = str(candidate) if candidate.exists() else ""
    if not path:
        pytest.skip("tagteam executable not found; set TAGTEAM_CLI")
    return path
