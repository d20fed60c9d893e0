import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("imgs")
    rng = np.random.default_rng(0)
    for i in range(8):
        arr = rng.integers(0, 256, (96, 96, 3), dtype=np.uint8)
        Image.fromarray(arr).save(root / f"sample{i}.png")
    return root
