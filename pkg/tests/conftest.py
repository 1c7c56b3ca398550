import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from crowdlens import generate_market, preset_spec

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def tiny_paths():
    base = DATA_DIR / "tiny"
    return base / "projects.csv", base / "contributions.csv", base / "schema.json"


@pytest.fixture(scope="session")
def strong_market():
    """Shared n=5,000 market with strong planted crowd effects."""
    return generate_market(preset_spec("strong", 5000, seed=20240731))


@pytest.fixture(scope="session")
def appeal_market():
    """Shared n=10,000 market with a planted +0.2 appeal effect."""
    return generate_market(preset_spec("appeal-only", 10000, seed=424242))


@pytest.fixture(scope="session")
def small_null_market():
    return generate_market(preset_spec("null", 1500, seed=77))
