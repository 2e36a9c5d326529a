import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from noisepair.maskops import BinaryMask, save_mask
from noisepair.pipeline import save_image


def texture(seed: int, size: int = 64) -> np.ndarray:
    """Random RGB texture in [0, 1] that survives 8-bit PNG exactly."""
    rng = np.random.default_rng(seed)
    u8 = rng.integers(0, 256, size=(3, size, size), dtype=np.uint8)
    return u8.astype(np.float64) / 255.0


def centered_box_mask(size: int = 64, frac: float = 0.4) -> BinaryMask:
    half = int(size * frac / 2)
    bits = np.zeros((size, size), dtype=bool)
    lo, hi = size // 2 - half, size // 2 + half
    bits[lo:hi, lo:hi] = True
    return BinaryMask(bits)


@pytest.fixture
def tiny_dataset(tmp_path):
    """Three valid entries (one will fail the size filter) plus a bad line."""
    root = tmp_path / "data"
    root.mkdir()
    lines = []
    for i, frac in enumerate([0.4, 0.5, 0.05]):  # 0.05 -> under the 1/5 floor
        img = texture(seed=100 + i)
        save_image(img, root / f"img_{i}.png")
        save_mask(centered_box_mask(frac=frac), root / f"mask_{i}.png")
        lines.append(
            f'{{"id": "e{i}", "image_path": "img_{i}.png", '
            f'"mask_path": "mask_{i}.png", "caption": "object {i}"}}'
        )
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest
