from pathlib import Path

import pytest

from formulac.cli import shipped_project_dir


@pytest.fixture(scope="session")
def projects() -> Path:
    return shipped_project_dir()


@pytest.fixture(scope="session")
def corpus500():
    from exprgen import corpus
    return corpus()
