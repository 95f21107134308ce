import numpy as np
import pytest

from msled.imaging import RgbImage


def write_ppm(path, pixels):
    """Write a (h, w, 3) uint8 array as a binary P6 file."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    height, width = pixels.shape[:2]
    with open(path, "wb") as handle:
        handle.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        handle.write(pixels.tobytes())


def random_rgb(rng, height, width):
    return RgbImage(rng.uniform(0.0, 255.0, (height, width, 3)))


def grating_image(rng, size, period, angle, noise_sigma=6.0, amplitude=85.0):
    """One synthetic texture: an oriented sinusoidal grating plus noise.

    The grating phase and the additive Gaussian noise vary per call, so
    repeated calls with one class's (period, angle) give distinct images
    of the same texture family.
    """
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    wave = np.sin(2.0 * np.pi * (xs * np.cos(angle) + ys * np.sin(angle)) / period + phase)
    plane = 128.0 + amplitude * wave + rng.normal(0.0, noise_sigma, (size, size))
    plane = np.clip(plane, 0.0, 255.0)
    return np.repeat(plane[:, :, None], 3, axis=2)


# non-integer periods keep the gratings from phase-locking onto the pixel
# lattice, which would blow up the within-class descriptor spread
GRATING_PERIODS = (3.3, 4.3, 5.6, 7.3)
GRATING_ANGLES = (0.0, np.pi / 4.0)


def grating_corpus(seed=7, images_per_class=8, size=128):
    """8 grating classes (4 periods x 2 orientations), fixed seed.

    Returns (class label, pixel array) pairs in a deterministic order.
    """
    rng = np.random.default_rng(seed)
    corpus = []
    for period in GRATING_PERIODS:
        for angle_index, angle in enumerate(GRATING_ANGLES):
            label = f"p{period}a{angle_index}"
            for _ in range(images_per_class):
                corpus.append((label, grating_image(rng, size, period, angle)))
    return corpus


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
