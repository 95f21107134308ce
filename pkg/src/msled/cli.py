"""Command line front end: index a corpus, query it, and compute ARR.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure. Results go to stdout, errors to stderr.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .descriptor import PipelineConfig, compute_descriptor
from .errors import (
    DatasetError,
    DecodeError,
    DegenerateInputError,
    DescriptorMismatchError,
    IndexBuildError,
    IndexFileError,
    MetricDomainError,
    ParameterError,
)
from .imaging import load_image
from .retrieval import (
    build_index,
    evaluate_arr,
    load_index,
    query,
    save_index,
    scan_dataset,
    write_arr_csv,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_CONFIG_KEYS = ("window", "block_size", "overlap", "scales", "epsilon_scale", "strict_extrema")


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_scales(text: str) -> tuple[float, ...]:
    scales = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            if "/" in token:
                numerator, denominator = token.split("/", 1)
                scales.append(float(numerator) / float(denominator))
            else:
                scales.append(float(token))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"invalid scale {token!r} in {text!r}") from exc
    if not scales:
        raise ParameterError(f"no scales given in {text!r}")
    return tuple(scales)


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ParameterError(f"invalid boolean {text!r}")


def _read_config_file(path: str) -> dict[str, str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ParameterError(f"{path}:{lineno}: unknown config key {key!r}")
        mapping[key] = value
    return mapping


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    """Defaults < config file < individual flags."""
    values: dict = {}
    if args.config is not None:
        raw = _read_config_file(args.config)
        if "window" in raw:
            values["window"] = int(raw["window"])
        if "block_size" in raw:
            values["block_size"] = int(raw["block_size"])
        if "overlap" in raw:
            values["overlap"] = float(raw["overlap"])
        if "scales" in raw:
            values["scales"] = _parse_scales(raw["scales"])
        if "epsilon_scale" in raw:
            values["epsilon_scale"] = float(raw["epsilon_scale"])
        if "strict_extrema" in raw:
            values["strict_extrema"] = _parse_bool(raw["strict_extrema"])
    if args.window is not None:
        values["window"] = args.window
    if args.block_size is not None:
        values["block_size"] = args.block_size
    if args.overlap is not None:
        values["overlap"] = args.overlap
    if args.scales is not None:
        values["scales"] = _parse_scales(args.scales)
    if args.epsilon_scale is not None:
        values["epsilon_scale"] = args.epsilon_scale
    if args.strict_extrema is not None:
        values["strict_extrema"] = args.strict_extrema
    return PipelineConfig(**values)


def _cmd_index(args: argparse.Namespace) -> int:
    config = _build_config(args)
    manifest = scan_dataset(args.dataset, labeling=args.labeling)
    for warning in manifest.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"images: {manifest.total_images}  classes: {manifest.class_count}")
    started = time.perf_counter()
    index = build_index(manifest, config, jobs=args.jobs)
    elapsed = time.perf_counter() - started
    print(
        f"feature extraction: {elapsed:.2f} s total, "
        f"{elapsed / manifest.total_images:.4f} s/image"
    )
    save_index(index, args.out)
    print(f"index written: {args.out} ({len(index.entries)} entries)")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    sizes = index.class_sizes
    print(f"index: {args.index}  entries: {len(index.entries)}  classes: {len(sizes)}")
    k = args.k
    if k is None:
        uniform = set(sizes.values())
        if len(uniform) != 1:
            raise ParameterError(
                "classes differ in size; pass an explicit --k "
                f"(sizes range {min(uniform)}..{max(uniform)})"
            )
        k = uniform.pop()
    started = time.perf_counter()
    report = evaluate_arr(index, k, jobs=args.jobs)
    elapsed = time.perf_counter() - started
    if not report.uniform_relevant_count:
        print("warning: classes differ in size; per-query relevant counts used", file=sys.stderr)
    print(
        f"dissimilarity measurement: {elapsed:.2f} s total, "
        f"{elapsed / len(index.entries):.4f} s/image"
    )
    print(f"ARR(K={k}) = {report.arr:.6f}")
    csv_path = args.csv if args.csv is not None else f"{args.index}.arr.csv"
    write_arr_csv(report, csv_path)
    print(f"per-class rates: {csv_path}")
    return EXIT_OK


def _cmd_query(args: argparse.Namespace) -> int:
    index = load_index(args.index)
    probe = compute_descriptor(load_image(args.image), index.config)
    result = query(index, probe, args.k)
    labels = {entry.image_id: entry.label for entry in index.entries}
    for rank, (image_id, distance) in enumerate(result.items, 1):
        print(f"{rank},{image_id},{labels[image_id]},{distance:.6f}")
    return EXIT_OK


def _cmd_distance(args: argparse.Namespace) -> int:
    from .metric import riemannian_distance

    index = load_index(args.index)
    try:
        entry_a = index.entry_by_id(args.id_a)
        entry_b = index.entry_by_id(args.id_b)
    except KeyError as exc:
        raise ParameterError(str(exc.args[0])) from exc
    total = 0.0
    for scale, cov_a, cov_b in zip(
        index.config.scales, entry_a.descriptor.matrices, entry_b.descriptor.matrices
    ):
        part = riemannian_distance(cov_a.matrix, cov_b.matrix)
        total += part
        print(f"scale {scale:.6f}: {part:.12g}")
    print(f"total: {total:.12g}")
    return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("pipeline configuration")
    group.add_argument("--window", type=int, default=None, metavar="N",
                       help="extrema search window, odd >= 3 (default: 3)")
    group.add_argument("--block-size", type=int, default=None, metavar="N",
                       help="feature block side in pixels (default: 32)")
    group.add_argument("--overlap", type=float, default=None, metavar="F",
                       help="block overlap fraction in [0, 1) (default: 0.5)")
    group.add_argument("--scales", type=str, default=None, metavar="LIST",
                       help="comma-separated scale factors, fractions allowed "
                            "(default: 2/3,1,3/2)")
    group.add_argument("--epsilon-scale", type=float, default=None, metavar="F",
                       help="covariance regularization multiplier (default: 1e-6)")
    group.add_argument("--strict-extrema", action=argparse.BooleanOptionalAction, default=None,
                       help="window ties disqualify extrema (default: strict)")
    group.add_argument("--config", type=str, default=None, metavar="FILE",
                       help="key=value config file; flags override file values")


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="msled",
        description="Texture retrieval with multiscale local-extrema covariance descriptors.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_index = sub.add_parser("index", help="build a descriptor index from a texture corpus")
    p_index.add_argument("--dataset", required=True, metavar="DIR", help="corpus root directory")
    p_index.add_argument("--out", required=True, metavar="FILE", help="index file to write")
    p_index.add_argument("--labeling", choices=("stem", "subdir"), default="stem",
                         help="class labeling rule (default: stem)")
    p_index.add_argument("--jobs", type=int, default=1, metavar="N",
                         help="worker processes for feature extraction (default: 1)")
    _add_config_flags(p_index)
    p_index.set_defaults(handler=_cmd_index)

    p_eval = sub.add_parser("evaluate", help="compute the average retrieval rate of an index")
    p_eval.add_argument("--index", required=True, metavar="FILE", help="index file")
    p_eval.add_argument("--k", type=int, default=None, metavar="K",
                        help="retrieved images per query (default: images per class)")
    p_eval.add_argument("--csv", type=str, default=None, metavar="FILE",
                        help="per-class rate CSV (default: <index>.arr.csv)")
    p_eval.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="worker threads for the distance matrix (default: 1)")
    p_eval.set_defaults(handler=_cmd_evaluate)

    p_query = sub.add_parser("query", help="rank index entries against a probe image")
    p_query.add_argument("--index", required=True, metavar="FILE", help="index file")
    p_query.add_argument("--image", required=True, metavar="FILE", help="probe image")
    p_query.add_argument("--k", type=int, default=10, metavar="K",
                         help="number of matches to print (default: 10)")
    p_query.set_defaults(handler=_cmd_query)

    p_dist = sub.add_parser("distance", help="distance between two indexed images")
    p_dist.add_argument("--index", required=True, metavar="FILE", help="index file")
    p_dist.add_argument("--id-a", required=True, type=int, metavar="ID", help="first image id")
    p_dist.add_argument("--id-b", required=True, type=int, metavar="ID", help="second image id")
    p_dist.set_defaults(handler=_cmd_distance)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ParameterError as exc:
        print(f"msled: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecodeError, DatasetError, IndexFileError, IndexBuildError, OSError) as exc:
        print(f"msled: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MetricDomainError, DegenerateInputError, DescriptorMismatchError,
            np.linalg.LinAlgError) as exc:
        print(f"msled: error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
