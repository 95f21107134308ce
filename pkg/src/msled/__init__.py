"""Multiscale local-extrema texture descriptors and covariance-based retrieval."""

from .descriptor import (
    BlockGrid,
    CovarianceDescriptor,
    MultiscaleDescriptor,
    PipelineConfig,
    compute_descriptor,
    embed_covariance,
    extract_sled,
    partition_blocks,
)
from .errors import (
    DatasetError,
    DecodeError,
    DegenerateInputError,
    DescriptorMismatchError,
    IndexBuildError,
    IndexChecksumError,
    IndexFileError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    MetricDomainError,
    MsledError,
    ParameterError,
)
from .extrema import ExtremaSet, detect_local_extrema
from .imaging import (
    GradientImage,
    GrayImage,
    RgbImage,
    load_image,
    resample_bicubic,
    sobel_gradient_magnitude,
    to_grayscale,
)
from .metric import (
    distances_to_many,
    multiscale_distance,
    pairwise_multiscale_distances,
    riemannian_distance,
)
from .retrieval import (
    ArrReport,
    DatasetManifest,
    DescriptorIndex,
    IndexEntry,
    ManifestEntry,
    RankedResult,
    build_index,
    evaluate_arr,
    load_index,
    query,
    save_index,
    scan_dataset,
    write_arr_csv,
)

__version__ = "0.1.0"
