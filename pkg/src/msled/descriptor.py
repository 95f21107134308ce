"""Block-wise local-extrema feature vectors and their covariance embedding.

The descriptor of one image at one scale is the covariance matrix of the
20-dimensional feature vectors extracted from every overlapping block of
the image. The multiscale descriptor stacks one such matrix per scale
factor (default 2/3, 1, 3/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ParameterError
from .extrema import ExtremaSet, detect_local_extrema
from .imaging import GradientImage, RgbImage, resample_bicubic, sobel_gradient_magnitude, to_grayscale

# one half per extrema kind: RGB means (3), RGB variances (3),
# center-distance mean/variance, gradient mean/variance
HALF_LENGTH = 10
SLED_LENGTH = 2 * HALF_LENGTH

Block = tuple[int, int, int, int]

DEFAULT_SCALES = (2.0 / 3.0, 1.0, 3.0 / 2.0)


@dataclass(frozen=True)
class PipelineConfig:
    """Parameters of the full descriptor pipeline.

    window          side of the extrema search window (odd, >= 3)
    block_size      side W of the square feature blocks, in pixels
    overlap         fraction of W shared by consecutive blocks, in [0, 1)
    scales          resampling factors, one covariance matrix per entry
    epsilon_scale   diagonal regularization multiplier for the covariance
    strict_extrema  whether window ties disqualify a pixel as an extremum
    """

    window: int = 3
    block_size: int = 32
    overlap: float = 0.5
    scales: tuple[float, ...] = DEFAULT_SCALES
    epsilon_scale: float = 1e-6
    strict_extrema: bool = True

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ParameterError(f"window must be an odd integer >= 3, got {self.window}")
        if self.block_size < 2:
            raise ParameterError(f"block_size must be >= 2, got {self.block_size}")
        if not 0.0 <= self.overlap < 1.0:
            raise ParameterError(f"overlap must lie in [0, 1), got {self.overlap}")
        scales = tuple(float(s) for s in self.scales)
        if not scales or any(not np.isfinite(s) or s <= 0.0 for s in scales):
            raise ParameterError(f"scales must be non-empty and positive, got {self.scales}")
        object.__setattr__(self, "scales", scales)
        if not np.isfinite(self.epsilon_scale) or self.epsilon_scale <= 0.0:
            raise ParameterError(f"epsilon_scale must be positive, got {self.epsilon_scale}")


@dataclass(frozen=True)
class BlockGrid:
    """Row-major list of (x0, y0, x1, y1) rectangles, exclusive ends."""

    block_size: int
    step: int
    blocks: tuple[Block, ...]


@dataclass(frozen=True, eq=False)
class CovarianceDescriptor:
    """Symmetric positive-definite embedding of one image scale.

    ``regularization`` records the epsilon actually added to the diagonal;
    it is None for descriptors restored from an index file, which stores
    only the regularized matrix.
    """

    matrix: np.ndarray
    regularization: float | None = None

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True, eq=False)
class MultiscaleDescriptor:
    """One covariance descriptor per scale factor, in scale order."""

    scales: tuple[float, ...]
    matrices: tuple[CovarianceDescriptor, ...]

    def __post_init__(self):
        if len(self.scales) != len(self.matrices):
            raise ValueError("scales and matrices must have equal length")
        if not self.matrices:
            raise ValueError("descriptor must have at least one scale")
        dims = {m.dimension for m in self.matrices}
        if len(dims) != 1:
            raise ValueError(f"matrices must share one dimension, got {sorted(dims)}")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))

    @property
    def dimension(self) -> int:
        return self.matrices[0].dimension


def partition_blocks(width: int, height: int, block_size: int, overlap: float) -> BlockGrid:
    """Cover the image with block_size x block_size rectangles.

    Origins sit at every multiple of step = block_size * (1 - overlap)
    below the image dimension, and blocks are clipped at the image
    boundary, so a 128x128 image with 32-pixel blocks at 50% overlap
    yields an 8x8 grid of 64 blocks.
    """
    if width < 1 or height < 1:
        raise ParameterError(f"image dimensions must be positive, got {width}x{height}")
    if block_size < 2:
        raise ParameterError(f"block_size must be >= 2, got {block_size}")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap must lie in [0, 1), got {overlap}")
    step = max(1, round(block_size * (1.0 - overlap)))
    blocks = []
    for y0 in range(0, height, step):
        for x0 in range(0, width, step):
            blocks.append((x0, y0, min(x0 + block_size, width), min(y0 + block_size, height)))
    return BlockGrid(block_size=block_size, step=step, blocks=tuple(blocks))


def block_center(block: Block) -> tuple[float, float]:
    """Center of the block's pixel lattice: ((x0+x1-1)/2, (y0+y1-1)/2)."""
    x0, y0, x1, y1 = block
    return (x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0


def extract_sled(
    block: Block, extrema: ExtremaSet, rgb: RgbImage, grad: GradientImage
) -> np.ndarray:
    """Feature vector of one block from the extrema falling inside it.

    Layout (20 values): the maxima half followed by the minima half, each
    half ordered as

        [mean R, mean G, mean B, var R, var G, var B,
         mean center distance, var center distance,
         mean gradient, var gradient]

    Means and variances are population statistics over the block's extrema
    of that kind; center distance is the Euclidean pixel distance to the
    block center. A block with no extrema of one kind contributes ten
    zeros for that half.
    """
    x0, y0, x1, y1 = block
    if not (0 <= x0 < x1 <= rgb.width and 0 <= y0 < y1 <= rgb.height):
        raise ParameterError(f"block {block} does not lie inside a {rgb.width}x{rgb.height} image")
    cx, cy = block_center(block)
    halves = []
    for positions in (extrema.maxima, extrema.minima):
        xs = positions[:, 0]
        ys = positions[:, 1]
        inside = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
        halves.append(_half_vector(xs[inside], ys[inside], rgb, grad, cx, cy))
    return np.concatenate(halves)


def _half_vector(
    xs: np.ndarray, ys: np.ndarray, rgb: RgbImage, grad: GradientImage, cx: float, cy: float
) -> np.ndarray:
    if xs.size == 0:
        return np.zeros(HALF_LENGTH)
    colors = rgb.pixels[ys, xs]
    grads = grad.pixels[ys, xs]
    dist = np.hypot(xs - cx, ys - cy)
    return np.concatenate(
        [
            colors.mean(axis=0),
            colors.var(axis=0),
            [dist.mean(), dist.var(), grads.mean(), grads.var()],
        ]
    )


def embed_covariance(vectors, epsilon_scale: float = 1e-6) -> CovarianceDescriptor:
    """Biased (1/N) covariance of the feature vectors, regularized to SPD.

    epsilon = epsilon_scale * trace / dimension is added to the diagonal
    (or epsilon_scale itself when the raw covariance has zero trace), so
    the result is strictly positive definite even for degenerate blocks.
    """
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise ParameterError(f"expected a 2-d array of feature vectors, got shape {arr.shape}")
    n, dim = arr.shape
    if n < 2:
        raise DegenerateInputError(f"covariance embedding needs >= 2 vectors, got {n}")
    centered = arr - arr.mean(axis=0)
    cov = centered.T @ centered / n
    cov = (cov + cov.T) / 2.0
    trace = float(np.trace(cov))
    # centering identical vectors leaves residue of order (eps_mach * |v|)^2
    # per diagonal entry; a trace below that is a true zero
    zero_floor = dim * (1e-12 * max(1.0, float(np.abs(arr).max()))) ** 2
    eps = epsilon_scale * trace / dim if trace > zero_floor else epsilon_scale
    cov[np.diag_indices(dim)] += eps
    return CovarianceDescriptor(matrix=cov, regularization=eps)


def compute_descriptor(img: RgbImage, config: PipelineConfig | None = None) -> MultiscaleDescriptor:
    """Run the full per-image pipeline and return one matrix per scale.

    Each scale resamples the image (identity at scale 1), converts to
    grayscale, computes Sobel gradient magnitudes, detects local extrema,
    and embeds the per-block feature vectors into a covariance matrix.
    """
    cfg = config if config is not None else PipelineConfig()
    descriptors = []
    for scale in cfg.scales:
        scaled = img if scale == 1.0 else resample_bicubic(img, scale)
        gray = to_grayscale(scaled)
        grad = sobel_gradient_magnitude(gray)
        points = detect_local_extrema(gray, cfg.window, strict=cfg.strict_extrema)
        grid = partition_blocks(scaled.width, scaled.height, cfg.block_size, cfg.overlap)
        if len(grid.blocks) < 2:
            raise DegenerateInputError(
                f"scale {scale:g}: image of {scaled.width}x{scaled.height} produces "
                f"{len(grid.blocks)} block(s); covariance embedding needs >= 2"
            )
        vectors = np.stack([extract_sled(b, points, scaled, grad) for b in grid.blocks])
        descriptors.append(embed_covariance(vectors, cfg.epsilon_scale))
    return MultiscaleDescriptor(scales=cfg.scales, matrices=tuple(descriptors))
