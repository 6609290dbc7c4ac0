import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from train_export import train_and_export  # noqa: E402


@pytest.fixture(scope="session")
def bundle(tmp_path_factory):
    """One fully trained digits bundle shared by the whole session."""
    out = tmp_path_factory.mktemp("bundle")
    model, accuracy, paths = train_and_export("digits", seed=1, out_dir=out)
    return model, accuracy, paths
