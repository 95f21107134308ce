"""Detection of local maximum / local minimum pixels in a sliding window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .imaging import GrayImage


@dataclass(frozen=True, eq=False)
class ExtremaSet:
    """Positions of detected extrema, each an (n, 2) int array of (x, y).

    Both arrays are sorted in row-major image order (by y, then x), so two
    detections over the same input compare equal element-wise.
    """

    maxima: np.ndarray
    minima: np.ndarray


def detect_local_extrema(gray: GrayImage, window: int, *, strict: bool = True) -> ExtremaSet:
    """Find pixels that dominate every other pixel in the window centered on them.

    A pixel is a local maximum iff its value is strictly greater than all
    other pixels of the window x window neighborhood (strictly less for
    minima); with ``strict=False`` ties with the neighborhood extreme also
    qualify. Windows are only evaluated where they fit entirely inside the
    image, so nothing closer than (window-1)/2 to a border is ever reported.
    Images smaller than the window yield empty sets.
    """
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be an odd integer >= 3, got {window}")
    p = gray.pixels
    height, width = p.shape
    radius = window // 2
    empty = np.empty((0, 2), dtype=np.int64)
    if height < window or width < window:
        return ExtremaSet(maxima=empty, minima=empty)

    neighborhood = np.ones((window, window), dtype=bool)
    neighborhood[radius, radius] = False
    other_max = ndimage.maximum_filter(p, footprint=neighborhood, mode="constant", cval=-np.inf)
    other_min = ndimage.minimum_filter(p, footprint=neighborhood, mode="constant", cval=np.inf)
    if strict:
        is_max = p > other_max
        is_min = p < other_min
    else:
        is_max = p >= other_max
        is_min = p <= other_min

    fits = np.zeros_like(is_max)
    fits[radius : height - radius, radius : width - radius] = True
    return ExtremaSet(maxima=_positions(is_max & fits), minima=_positions(is_min & fits))


def _positions(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)  # nonzero scans row-major, keeping the order deterministic
    return np.column_stack([xs, ys]).astype(np.int64)
