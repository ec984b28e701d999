"""Writes the RGB test images under crates/core/tests/data.

Sources are photographs bundled with scikit-image (public domain or CC0).
Each is cropped to a fixed 256x256 window.
"""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data

OUT = Path(__file__).resolve().parents[1] / "crates" / "core" / "tests" / "data"

# name -> (loader, top, left)
CROPS = {
    "astronaut": (data.astronaut, 0, 128),
    "chelsea": (data.chelsea, 20, 100),
    "coffee": (data.coffee, 100, 200),
    "rocket": (data.rocket, 120, 250),
}
SIZE = 256


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, (load, top, left) in CROPS.items():
        rgb = np.ascontiguousarray(load()[top : top + SIZE, left : left + SIZE, :3])
        assert rgb.shape == (SIZE, SIZE, 3) and rgb.dtype == np.uint8
        Image.fromarray(rgb, "RGB").save(OUT / f"{name}.png")
        print(name, rgb.shape)


if __name__ == "__main__":
    main()
