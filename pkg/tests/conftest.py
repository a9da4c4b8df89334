import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make `oracles` importable

DATA_DIR = Path(__file__).parent / "data"


def make_blocky_image(rng, h, w):
    """Piecewise-constant random image: a few overlapping color rectangles."""
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:] = rng.integers(0, 256, 3, dtype=np.uint8)
    for _ in range(4):
        x0, y0 = int(rng.integers(0, w // 2)), int(rng.integers(0, h // 2))
        x1, y1 = int(rng.integers(w // 2, w + 1)), int(rng.integers(h // 2, h + 1))
        img[y0:y1, x0:x1] = rng.integers(0, 256, 3, dtype=np.uint8)
    return img


def make_noise_image(rng, h, w):
    return rng.integers(0, 256, (h, w, 3), dtype=np.uint8)


def make_prob_volume(rng, k, h, w):
    probs = rng.uniform(0.05, 1.0, (k, h, w))
    return probs / probs.sum(axis=0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
