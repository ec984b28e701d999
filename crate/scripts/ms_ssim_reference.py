"""Reference MS-SSIM for the fixture pair, computed with TensorFlow.

Writes pairs/astronaut_distorted.png (blur plus seeded noise)
and prints tf.image.ssim_multiscale on the luma of both images.
"""

from pathlib import Path

import numpy as np
import tensorflow as tf
from PIL import Image
from scipy.ndimage import gaussian_filter

DATA = Path(__file__).resolve().parents[1] / "crates" / "core" / "tests" / "data"


def luma(rgb: np.ndarray) -> np.ndarray:
    rgb = rgb.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]


def main() -> None:
    x = np.asarray(Image.open(DATA / "astronaut.png").convert("RGB"))
    rng = np.random.default_rng(20240)
    blurred = gaussian_filter(x.astype(np.float64), sigma=(1.2, 1.2, 0))
    noisy = blurred + rng.normal(0.0, 6.0, size=x.shape)
    y = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)
    (DATA / "pairs").mkdir(exist_ok=True)
    Image.fromarray(y, "RGB").save(DATA / "pairs" / "astronaut_distorted.png")

    a = tf.constant(luma(x)[None, :, :, None], dtype=tf.float64)
    b = tf.constant(luma(y)[None, :, :, None], dtype=tf.float64)
    score = tf.image.ssim_multiscale(a, b, max_val=255.0)
    same = tf.image.ssim_multiscale(a, a, max_val=255.0)
    print(f"ms_ssim(x, y) = {float(score[0]):.12f}")
    print(f"ms_ssim(x, x) = {float(same[0]):.12f}")


def odd_crop() -> None:
    """Same pair cropped to 201x183, exercising the odd-size downsampling."""
    x = luma(np.asarray(Image.open(DATA / "astronaut.png").convert("RGB")))[:183, :201]
    y = luma(np.asarray(Image.open(DATA / "pairs" / "astronaut_distorted.png").convert("RGB")))[:183, :201]
    a = tf.constant(x[None, :, :, None], dtype=tf.float64)
    b = tf.constant(y[None, :, :, None], dtype=tf.float64)
    print(f"ms_ssim(x, y) 201x183 = {float(tf.image.ssim_multiscale(a, b, max_val=255.0)[0]):.12f}")


if __name__ == "__main__":
    main()
    odd_crop()
