import argparse
import sys

from .capture import CaptureConfig, capture
from .errors import ExportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ompq-export",
        description="Capture per-layer activations and shape facts from a "
        "torchvision classifier in the allocator's file formats.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    cap = sub.add_parser("capture", help="run a model over sample images")
    cap.add_argument("--model", required=True,
                     help="architecture identifier (resnet18, mobilenet_v2)")
    cap.add_argument("--data", required=True, help="directory of sample images")
    cap.add_argument("--n", type=int, default=None,
                     help="sample count (default: the architecture's own)")
    cap.add_argument("--out-dump", required=True, help="activation dump path")
    cap.add_argument("--out-model", required=True, help="descriptor JSON path")
    cap.add_argument("--weights", default=None,
                     help="optional local state-dict file (random init otherwise)")
    return parser


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    config = CaptureConfig(
        model=args.model,
        data_dir=args.data,
        out_dump=args.out_dump,
        out_model=args.out_model,
        n_samples=args.n,
        weights=args.weights,
    )
    try:
        names, samples = capture(config)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    print(
        f"captured {len(names)} layers x {samples} samples -> "
        f"{args.out_dump}, {args.out_model}"
    )
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
