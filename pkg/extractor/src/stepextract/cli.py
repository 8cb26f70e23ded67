"""Command line front end: ``stepextract --list clips.tsv --out DIR``."""

import argparse
import logging
import sys

from .backbone import BACKBONES
from .errors import DataError, SpecError
from .extract import ExtractSpec, extract

USAGE_ERROR = 2
DATA_ERROR = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stepextract",
        description="Export frozen ViT features for video clips into "
                    "binary containers plus a dataset manifest.")
    p.add_argument("--list", required=True, dest="list_path",
                   help="TSV of clip path, class name, optional split")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--backbone", default="dinov2-vitb14",
                   help=f"one of: {', '.join(sorted(BACKBONES))}")
    p.add_argument("--weights", help="state dict for the backbone "
                   "(default: deterministic seeded random weights)")
    p.add_argument("--frames", type=int, default=16, dest="num_frames",
                   help="frames sampled uniformly per clip")
    p.add_argument("--resolution", type=int,
                   help="square input edge (default: backbone native)")
    p.add_argument("--batch-size", type=int, default=8, dest="batch_size")
    p.add_argument("--device", default="cpu")
    p.add_argument("--workers", type=int, default=1,
                   help="clip-level worker threads")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the untrained-weights mode")
    p.add_argument("-q", "--quiet", action="store_true",
                   help="suppress progress logging (warnings still show)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s")
    try:
        spec = ExtractSpec(
            list_path=args.list_path, out_dir=args.out,
            backbone=args.backbone, weights=args.weights,
            num_frames=args.num_frames, resolution=args.resolution,
            batch_size=args.batch_size, device=args.device,
            workers=args.workers, seed=args.seed)
        report = extract(spec)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    t, n, d = report.dims
    print(f"clips written: {len(report.written)}")
    print(f"clips skipped: {len(report.skipped)}")
    print(f"dims: T={t} n={n} d={d}")
    print(f"manifest: {report.manifest_path}")
    print(f"metadata: {report.meta_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
