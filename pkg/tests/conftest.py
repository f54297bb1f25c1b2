import json
import os
from pathlib import Path

import numpy as np
import pytest

from src.ltew.model import LTEW, ModelConfig
from src.utils.image_io import ImageBuffer

TINY = ModelConfig(channels=4, n_freq=3, hidden=8, shape_floor=(0.25, 0.0, 0.0, 0.25))
GOLDEN_PATH = Path(__file__).parent / "golden_values.json"


def pytest_collection_modifyitems(config, items):
    if os.getenv("LTEW_RUN_SLOW", "0").lower() in ["true", "1"]:
        return
    skip_slow = pytest.mark.skip(reason="set LTEW_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    return LTEW.random(TINY, seed=0)


@pytest.fixture
def smooth_image():
    v, u = np.meshgrid(
        np.linspace(0.0, 1.0, 16), np.linspace(0.0, 1.0, 32), indexing="ij"
    )
    return ImageBuffer.full(np.stack([u, v, 0.5 * (u + v)], axis=-1))


@pytest.fixture
def random_image(rng):
    return ImageBuffer.full(rng.integers(0, 256, (16, 32, 3)) / 255.0)


def digest(values) -> np.ndarray:
    """Sum, absolute sum and 16 evenly spaced entries of a flattened array."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    picks = flat[:: max(1, flat.size // 16)][:16]
    return np.concatenate([[flat.sum(), np.abs(flat).sum()], picks])


@pytest.fixture(scope="session")
def golden_store():
    """Regression values recorded by the first run; LTEW_UPDATE_GOLDEN=1 re-records."""
    store = json.loads(GOLDEN_PATH.read_text()) if GOLDEN_PATH.exists() else {}
    recorded = []
    yield store, recorded
    if recorded:
        GOLDEN_PATH.write_text(json.dumps(store, indent=2, sort_keys=True) + "\n")


@pytest.fixture
def golden(golden_store):
    store, recorded = golden_store
    update = os.getenv("LTEW_UPDATE_GOLDEN", "0").lower() in ["true", "1"]

    def check(key: str, values, rtol: float = 1e-5, atol: float = 1e-7):
        values = digest(values)
        if update or key not in store:
            store[key] = values.tolist()
            recorded.append(key)
            return
        expected = np.array(store[key])
        assert expected.shape == values.shape, f"golden '{key}' changed length"
        drifted = f"golden '{key}' drifted"
        assert np.allclose(values, expected, rtol=rtol, atol=atol), drifted

    return check
