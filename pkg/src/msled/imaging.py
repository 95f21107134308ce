"""Image decoding and the raster transforms feeding the descriptor pipeline.

Images are kept as float64 arrays throughout: grayscale conversion and
resampling never re-quantize, so downstream statistics see the full
precision of the interpolated values.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ParameterError

# ITU-R BT.601 luma weights
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class RgbImage:
    """Three-channel raster, shape (height, width, 3), values in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) array, got shape {p.shape}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if p.min() < 0.0 or p.max() > 255.0:
            raise ValueError("intensities must lie in [0, 255]")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Single-plane luminance raster, values in [0, 255]."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d array, got shape {p.shape}")
        if p.min() < 0.0 or p.max() > 255.0:
            raise ValueError("luminance must lie in [0, 255]")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True, eq=False)
class GradientImage:
    """Single-plane raster of non-negative gradient magnitudes."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d array, got shape {p.shape}")
        if p.min() < 0.0:
            raise ValueError("gradient magnitudes must be non-negative")
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def load_image(path: str | Path) -> RgbImage:
    """Decode a PPM (binary P6, maxval 255) or 8-bit PNG file.

    Grayscale inputs are replicated into three identical channels so the
    rest of the pipeline only ever sees RGB.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DecodeError(f"{path}: {exc.strerror or exc}") from exc
    if raw[:2] == b"P6":
        arr = _decode_ppm(raw, path)
    else:
        arr = _decode_with_pillow(raw, path)
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DecodeError(f"{path}: zero-sized image")
    return RgbImage(arr.astype(np.float64))


def _decode_ppm(raw: bytes, path: Path) -> np.ndarray:
    try:
        fields, offset = _ppm_header_fields(raw)
    except ValueError as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise DecodeError(f"{path}: unsupported PPM maxval {maxval} (only 255)")
    if width < 1 or height < 1:
        raise DecodeError(f"{path}: zero-sized image")
    need = width * height * 3
    data = raw[offset : offset + need]
    if len(data) < need:
        raise DecodeError(f"{path}: truncated pixel data ({len(data)} of {need} bytes)")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)


def _ppm_header_fields(raw: bytes) -> tuple[tuple[int, int, int], int]:
    """Parse 'P6 <width> <height> <maxval>' allowing comments, return fields
    and the offset of the first pixel byte."""
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] not in (0x0A, 0x0D):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token:
            raise ValueError("incomplete PPM header")
        if not token.isdigit():
            raise ValueError(f"malformed PPM header token {token!r}")
        fields.append(int(token))
    # exactly one whitespace byte separates the header from the pixel data
    if pos >= len(raw):
        raise ValueError("incomplete PPM header")
    return (fields[0], fields[1], fields[2]), pos + 1


def _decode_with_pillow(raw: bytes, path: Path) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(raw)) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode == "L":
                plane = np.asarray(im, dtype=np.uint8)
                return np.repeat(plane[:, :, None], 3, axis=2)
            if im.mode == "RGB":
                return np.asarray(im, dtype=np.uint8)
            raise DecodeError(
                f"{path}: unsupported image mode {im.mode!r} (need 8-bit RGB or grayscale)"
            )
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a supported image format (PPM P6 or PNG)") from exc
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


def to_grayscale(img: RgbImage) -> GrayImage:
    """Weighted channel sum 0.299 R + 0.587 G + 0.114 B, not quantized."""
    wr, wg, wb = GRAY_WEIGHTS
    p = img.pixels
    gray = wr * p[:, :, 0] + wg * p[:, :, 1] + wb * p[:, :, 2]
    # summation round-off can drift a hair past 255 at the white point
    return GrayImage(np.clip(gray, 0.0, 255.0))


def sobel_gradient_magnitude(img: GrayImage) -> GradientImage:
    """Gradient magnitude sqrt(Gx^2 + Gy^2) from the 3x3 Sobel kernels.

    Borders are replicate-padded by one pixel so the output has the same
    dimensions as the input.
    """
    p = np.pad(img.pixels, 1, mode="edge")
    gx = (
        (p[:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[1:-1, :-2] + p[2:, :-2])
    )
    gy = (
        (p[2:, :-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:])
        - (p[:-2, :-2] + 2.0 * p[:-2, 1:-1] + p[:-2, 2:])
    )
    return GradientImage(np.hypot(gx, gy))


def resample_bicubic(img: RgbImage, scale: float) -> RgbImage:
    """Rescale with separable cubic convolution (kernel parameter a = -0.5).

    Output dimensions are ceil(scale * input). When downscaling the kernel
    support is widened by 1/scale, which low-pass filters the input
    (antialiasing). Weights are renormalized per output pixel, so constant
    images are reproduced exactly; borders replicate the edge pixel.
    Interpolation overshoot is clipped back into [0, 255].
    """
    if not math.isfinite(scale) or scale <= 0.0:
        raise ParameterError(f"scale must be a positive finite number, got {scale}")
    out_h = math.ceil(scale * img.height)
    out_w = math.ceil(scale * img.width)
    if out_h < 1 or out_w < 1:
        raise ParameterError(f"scale {scale} produces an empty output image")
    row_w, row_i = _axis_weights(img.height, out_h, scale)
    col_w, col_i = _axis_weights(img.width, out_w, scale)
    tmp = np.einsum("ok,okwc->owc", row_w, img.pixels[row_i])
    out = np.einsum("ok,hokc->hoc", col_w, tmp[:, col_i])
    return RgbImage(np.clip(out, 0.0, 255.0))


def _cubic_kernel(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with a = -0.5 (Catmull-Rom)."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = 1.5 * ax3 - 2.5 * ax2 + 1.0
    far = -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


def _axis_weights(in_size: int, out_size: int, scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-pixel interpolation weights and clamped source indices."""
    # map output pixel centers onto input coordinates
    u = (np.arange(out_size) + 0.5) / scale - 0.5
    if scale < 1.0:
        support = 4.0 / scale
        kernel = lambda t: scale * _cubic_kernel(scale * t)  # noqa: E731
    else:
        support = 4.0
        kernel = _cubic_kernel
    left = np.floor(u - support / 2.0).astype(np.int64)
    taps = int(math.ceil(support)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = kernel(u[:, None] - idx)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights, np.clip(idx, 0, in_size - 1)
