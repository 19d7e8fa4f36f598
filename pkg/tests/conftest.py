from __future__ import annotations

import numpy as np
import pytest
from PIL import Image


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(20240101))


@pytest.fixture
def source_dir(tmp_path):
    """Five small random RGB source images on disk."""
    src = tmp_path / "sources"
    src.mkdir()
    gen = np.random.Generator(np.random.PCG64(7))
    for i in range(5):
        arr = gen.integers(0, 256, size=(96 + 8 * i, 120, 3), dtype=np.uint8)
        Image.fromarray(arr, "RGB").save(src / f"img{i:03d}.png")
    return src


@pytest.fixture
def checker_image() -> Image.Image:
    """A 64x64 checkerboard, handy for pixel-level assertions."""
    tile = np.zeros((64, 64, 3), dtype=np.uint8)
    ys, xs = np.mgrid[0:64, 0:64]
    tile[((ys // 8) + (xs // 8)) % 2 == 0] = (220, 40, 40)
    tile[((ys // 8) + (xs // 8)) % 2 == 1] = (40, 40, 220)
    return Image.fromarray(tile, "RGB")
