"""Dataset ingestion, descriptor indexing, K-nearest retrieval and ARR.

Index file format (binary, little-endian):

    magic   8 bytes  b"SLEDIDX1"
    config  window u32, block_size u32, overlap f64, n_scales u32,
            scales f64 each, epsilon_scale f64, strict_extrema u8
    count   u64
    entry   id u64, label length u32 + UTF-8 bytes, then per scale the
            210 f64 values of the matrix upper triangle (row-major)
    crc     u32 CRC-32C of all preceding bytes

Evaluation reports are written as UTF-8 CSV with a ``class,rate`` header,
one row per class and a final ``ARR,<value>`` row, values with 6 digits.
"""

from __future__ import annotations

import csv
import re
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptor import (
    CovarianceDescriptor,
    MultiscaleDescriptor,
    PipelineConfig,
    compute_descriptor,
)
from .errors import (
    DatasetError,
    IndexBuildError,
    IndexChecksumError,
    IndexFormatError,
    IndexTruncatedError,
    IndexVersionError,
    MsledError,
    ParameterError,
)
from .imaging import load_image
from .metric import distances_to_many, pairwise_multiscale_distances

INDEX_MAGIC = b"SLEDIDX1"
IMAGE_SUFFIXES = (".ppm", ".png")

# the file format stores exactly the upper triangle of a 20x20 matrix
STORED_DIMENSION = 20
_TRIANGLE_LENGTH = STORED_DIMENSION * (STORED_DIMENSION + 1) // 2

_TRAILING_INDEX_RE = re.compile(r"\.\d+$")


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    label: str
    image_id: int


@dataclass(frozen=True)
class DatasetManifest:
    """Deterministic listing of a labeled texture corpus."""

    entries: tuple[ManifestEntry, ...]
    warnings: tuple[str, ...] = ()

    @property
    def total_images(self) -> int:
        return len(self.entries)

    @property
    def class_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for entry in self.entries:
            sizes[entry.label] = sizes.get(entry.label, 0) + 1
        return sizes

    @property
    def class_count(self) -> int:
        return len(self.class_sizes)

    @property
    def images_per_class(self) -> int | None:
        """Uniform per-class image count, or None when classes differ in size."""
        sizes = set(self.class_sizes.values())
        return sizes.pop() if len(sizes) == 1 else None


@dataclass(frozen=True)
class IndexEntry:
    image_id: int
    label: str
    descriptor: MultiscaleDescriptor


@dataclass(frozen=True, eq=False)
class DescriptorIndex:
    """Immutable database of per-image descriptors plus the config that built them."""

    config: PipelineConfig
    entries: tuple[IndexEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("index must contain at least one entry")
        ids = [e.image_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("index entries must have unique image ids")
        for e in self.entries:
            if e.descriptor.scales != self.config.scales:
                raise ValueError(
                    f"entry {e.image_id} has scales {e.descriptor.scales}, "
                    f"index config has {self.config.scales}"
                )

    def entry_by_id(self, image_id: int) -> IndexEntry:
        for entry in self.entries:
            if entry.image_id == image_id:
                return entry
        raise KeyError(f"no entry with id {image_id}")

    @property
    def class_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for entry in self.entries:
            sizes[entry.label] = sizes.get(entry.label, 0) + 1
        return sizes


@dataclass(frozen=True)
class RankedResult:
    """(image id, distance) pairs, ascending by distance, ties by id."""

    items: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class ArrReport:
    """Average retrieval rate at cutoff k, plus per-class rates."""

    k: int
    arr: float
    per_class: dict[str, float]
    uniform_relevant_count: bool


def scan_dataset(root: str | Path, labeling: str = "stem") -> DatasetManifest:
    """Build a manifest of every .ppm / .png file below root.

    ``labeling`` chooses the class rule: "subdir" takes the parent
    directory name, "stem" takes the filename with a trailing ``.NNNN``
    index stripped (so ``Bark.0000.ppm`` belongs to class ``Bark``).
    Files are sorted by relative path, and ids assigned in that order, so
    repeated scans of the same tree are identical.
    """
    root = Path(root)
    if labeling not in ("subdir", "stem"):
        raise ParameterError(f"labeling must be 'subdir' or 'stem', got {labeling!r}")
    if not root.is_dir():
        raise DatasetError(f"{root}: not a readable directory")
    files = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if not files:
        raise DatasetError(f"no images found under {root} (looked for {', '.join(IMAGE_SUFFIXES)})")
    entries = []
    for image_id, path in enumerate(files):
        if labeling == "subdir":
            label = path.parent.name
        else:
            label = _TRAILING_INDEX_RE.sub("", path.stem)
        entries.append(ManifestEntry(path=path, label=label, image_id=image_id))
    manifest = DatasetManifest(entries=tuple(entries))
    warnings = tuple(
        f"class {label!r} has a single image; retrieving its other relevant images is impossible"
        for label, size in sorted(manifest.class_sizes.items())
        if size == 1
    )
    return DatasetManifest(entries=manifest.entries, warnings=warnings)


def _build_entry(args: tuple[str, str, int, PipelineConfig]) -> IndexEntry:
    path, label, image_id, config = args
    try:
        descriptor = compute_descriptor(load_image(path), config)
    except MsledError as exc:
        raise IndexBuildError(f"image {image_id} ({path}): {exc}") from exc
    return IndexEntry(image_id=image_id, label=label, descriptor=descriptor)


def build_index(
    manifest: DatasetManifest, config: PipelineConfig | None = None, jobs: int = 1
) -> DescriptorIndex:
    """Compute one descriptor per manifest image.

    Any image failure aborts the whole build (partial indexes would corrupt
    the per-class bookkeeping of the evaluation). The result is identical
    for any worker count.
    """
    cfg = config if config is not None else PipelineConfig()
    work = [(str(e.path), e.label, e.image_id, cfg) for e in manifest.entries]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_build_entry, work, chunksize=8))
    else:
        entries = [_build_entry(item) for item in work]
    return DescriptorIndex(config=cfg, entries=tuple(entries))


def query(index: DescriptorIndex, probe: MultiscaleDescriptor, k: int) -> RankedResult:
    """The k nearest index entries to the probe descriptor."""
    n = len(index.entries)
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    if probe.scales != index.config.scales:
        raise ParameterError(
            f"probe scales {probe.scales} do not match index scales {index.config.scales}"
        )
    distances = distances_to_many(probe, [e.descriptor for e in index.entries])
    ids = np.array([e.image_id for e in index.entries], dtype=np.int64)
    order = np.lexsort((ids, distances))[:k]
    return RankedResult(items=tuple((int(ids[i]), float(distances[i])) for i in order))


def evaluate_arr(index: DescriptorIndex, k: int, jobs: int = 1) -> ArrReport:
    """Query every index image against the full index and average the hit rates.

    The query stays in the candidate set and self-matches at distance
    zero, counting as one of its own relevant images. Each query's hit
    count is normalized by its class size; classes of unequal size are
    flagged on the report.
    """
    n = len(index.entries)
    if not 1 <= k <= n:
        raise ParameterError(f"k must lie in [1, {n}], got {k}")
    labels = [e.label for e in index.entries]
    ids = np.array([e.image_id for e in index.entries], dtype=np.int64)
    sizes = index.class_sizes
    distances = pairwise_multiscale_distances([e.descriptor for e in index.entries], jobs=jobs)

    rates_by_class: dict[str, list[float]] = {label: [] for label in sizes}
    for i in range(n):
        order = np.lexsort((ids, distances[i]))[:k]
        hits = sum(1 for j in order if labels[j] == labels[i])
        rates_by_class[labels[i]].append(hits / sizes[labels[i]])
    per_class = {label: float(np.mean(r)) for label, r in rates_by_class.items()}
    arr = float(np.mean([rate for rates in rates_by_class.values() for rate in rates]))
    return ArrReport(
        k=k,
        arr=arr,
        per_class=per_class,
        uniform_relevant_count=len(set(sizes.values())) == 1,
    )


def write_arr_csv(report: ArrReport, path: str | Path) -> None:
    """Per-class rates plus a final ARR row, as decimal fractions with 6 digits."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["class", "rate"])
        for label in sorted(report.per_class):
            writer.writerow([label, f"{report.per_class[label]:.6f}"])
        writer.writerow(["ARR", f"{report.arr:.6f}"])


# ---------------------------------------------------------------------------
# persistence

_CRC32C_POLY = 0x82F63B78


def _make_crc_table() -> tuple[int, ...]:
    table = []
    for i in range(256):
        c = i
        for _ in range(8):
            c = (c >> 1) ^ _CRC32C_POLY if c & 1 else c >> 1
        table.append(c)
    return tuple(table)


_CRC_TABLE = _make_crc_table()


def crc32c(data: bytes, crc: int = 0) -> int:
    """CRC-32C (Castagnoli) checksum, e.g. crc32c(b'123456789') == 0xE3069283."""
    c = crc ^ 0xFFFFFFFF
    table = _CRC_TABLE
    for byte in data:
        c = (c >> 8) ^ table[(c ^ byte) & 0xFF]
    return c ^ 0xFFFFFFFF


def save_index(index: DescriptorIndex, path: str | Path) -> None:
    """Serialize the index; the layout is documented in the module docstring."""
    if index.entries[0].descriptor.dimension != STORED_DIMENSION:
        raise ParameterError(
            f"index files store {STORED_DIMENSION}x{STORED_DIMENSION} descriptors, "
            f"got dimension {index.entries[0].descriptor.dimension}"
        )
    cfg = index.config
    payload = bytearray()
    payload += INDEX_MAGIC
    payload += struct.pack("<II", cfg.window, cfg.block_size)
    payload += struct.pack("<d", cfg.overlap)
    payload += struct.pack("<I", len(cfg.scales))
    payload += struct.pack(f"<{len(cfg.scales)}d", *cfg.scales)
    payload += struct.pack("<d", cfg.epsilon_scale)
    payload += struct.pack("<B", 1 if cfg.strict_extrema else 0)
    payload += struct.pack("<Q", len(index.entries))
    rows, cols = np.triu_indices(STORED_DIMENSION)
    for entry in index.entries:
        label = entry.label.encode("utf-8")
        payload += struct.pack("<QI", entry.image_id, len(label))
        payload += label
        for cov in entry.descriptor.matrices:
            payload += np.ascontiguousarray(cov.matrix[rows, cols], dtype="<f8").tobytes()
    payload += struct.pack("<I", crc32c(bytes(payload)))
    Path(path).write_bytes(bytes(payload))


class _Reader:
    """Cursor over the index blob; running past the end means truncation."""

    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.blob):
            raise IndexTruncatedError(f"{self.path}: file ends inside a {fmt!r} field")
        values = struct.unpack_from(fmt, self.blob, self.offset)
        self.offset += size
        return values

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise IndexTruncatedError(f"{self.path}: file ends inside a {size}-byte field")
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk


def load_index(path: str | Path) -> DescriptorIndex:
    """Read an index file back; inverse of save_index.

    Structural problems raise IndexTruncatedError / IndexFormatError /
    IndexVersionError; a file that parses but fails its trailing CRC-32C
    raises IndexChecksumError.
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < len(INDEX_MAGIC) + 4:
        raise IndexTruncatedError(f"{path}: too short to be an index file")
    if blob[: len(INDEX_MAGIC)] != INDEX_MAGIC:
        if blob[: len(INDEX_MAGIC) - 1] == INDEX_MAGIC[:-1]:
            raise IndexVersionError(
                f"{path}: unsupported index version {blob[len(INDEX_MAGIC)-1:len(INDEX_MAGIC)]!r}"
            )
        raise IndexFormatError(f"{path}: not a descriptor index file (bad magic)")

    reader = _Reader(blob[:-4], path)
    reader.offset = len(INDEX_MAGIC)
    window, block_size = reader.take("<II")
    (overlap,) = reader.take("<d")
    (n_scales,) = reader.take("<I")
    scales = reader.take(f"<{n_scales}d")
    (epsilon_scale,) = reader.take("<d")
    (strict_byte,) = reader.take("<B")
    try:
        config = PipelineConfig(
            window=window,
            block_size=block_size,
            overlap=overlap,
            scales=scales,
            epsilon_scale=epsilon_scale,
            strict_extrema=bool(strict_byte),
        )
    except ParameterError as exc:
        raise IndexFormatError(f"{path}: invalid stored config: {exc}") from exc

    (count,) = reader.take("<Q")
    rows, cols = np.triu_indices(STORED_DIMENSION)
    entries = []
    for _ in range(count):
        image_id, label_length = reader.take("<QI")
        label = reader.take_bytes(label_length).decode("utf-8")
        matrices = []
        for _ in range(n_scales):
            values = np.frombuffer(
                reader.take_bytes(_TRIANGLE_LENGTH * 8), dtype="<f8"
            ).astype(np.float64)
            matrix = np.zeros((STORED_DIMENSION, STORED_DIMENSION))
            matrix[rows, cols] = values
            matrix[cols, rows] = values
            matrices.append(CovarianceDescriptor(matrix=matrix, regularization=None))
        entries.append(
            IndexEntry(
                image_id=image_id,
                label=label,
                descriptor=MultiscaleDescriptor(scales=config.scales, matrices=tuple(matrices)),
            )
        )
    if reader.offset != len(blob) - 4:
        raise IndexFormatError(f"{path}: {len(blob) - 4 - reader.offset} unexpected trailing bytes")

    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if crc32c(blob[:-4]) != stored_crc:
        raise IndexChecksumError(f"{path}: checksum mismatch, file is corrupt")
    try:
        return DescriptorIndex(config=config, entries=tuple(entries))
    except ValueError as exc:
        raise IndexFormatError(f"{path}: {exc}") from exc
