import numpy as np
import pytest

from irunet import rng
from irunet.imageio import quantize, save_image


def synth_image(seed: int, size: int = 32) -> np.ndarray:
    """Smooth random field: a few low-frequency sinusoids per channel around 0.5."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size, 3))
    u = rng.uniform(seed, 3 * 4 * 4)
    i = 0
    for c in range(3):
        f = np.full((size, size), 0.5, dtype=np.float64)
        for k in range(4):
            fx = (u[i] * 2.0 + 0.3) / size
            fy = (u[i + 1] * 2.0 + 0.3) / size
            phase = u[i + 2] * 2.0 * np.pi
            amp = 0.28 * u[i + 3] / (k + 1)
            f += amp * np.sin(2.0 * np.pi * (fx * xx + fy * yy) + phase)
            i += 4
        img[:, :, c] = f
    return quantize(np.clip(img, 0.0, 1.0))


def write_corpus(dirpath, count: int, size: int = 32, tag: str = "img",
                 ext: str = ".png") -> list:
    """Write `count` synthetic clean images into dirpath; returns their names."""
    dirpath.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(count):
        name = f"{tag}{i:03d}{ext}"
        save_image(synth_image(rng.hash64(tag, i), size=size), str(dirpath / name))
        names.append(name)
    return names


@pytest.fixture
def corpus8(tmp_path):
    """Eight 32x32 clean images in a temp directory."""
    clean_dir = tmp_path / "clean"
    names = write_corpus(clean_dir, 8, size=32)
    return clean_dir, names
