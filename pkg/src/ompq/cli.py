"""Command-line interface.

Subcommands cover the full pipeline: `toynet` fabricates a reproducible
activation dump plus descriptor, `orm` turns a dump into an orthogonality
matrix CSV, `allocate` turns matrix plus descriptor into a bit profile, and
`bench` times the two matrix strategies against each other.

Exit codes: 0 success, 2 usage, 3 data or format problems, 4 infeasible
budget. OMPQ_WORKERS overrides --workers when set.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from .allocator import allocate
from .core import FeatureMatrix
from .errors import Infeasible, OmpqError
from .model_io import (
    read_descriptor,
    read_dump,
    read_orm_csv,
    write_descriptor,
    write_dump,
    write_orm_csv,
    write_report,
)
from .orm import (
    compute_orm_matrix,
    gram,
    gram_norm,
    orm_pair_gram,
    orm_pair_norm,
)
from .toynet import (
    ToyNetSpec,
    build,
    descriptor_for,
    forward_collect,
    input_seed_for,
    sample_inputs,
)

_IMPORTANCE_FLAGS = {
    "exp": "exp-neg",
    "neglog": "neg-log",
    "neg": "neg",
    "negcube": "neg-cube",
    "negexp": "neg-exp",
}

_BENCH_SEED = 0x5EED


def _bits_range(text: str) -> tuple[int, int]:
    try:
        lo_text, hi_text = text.split(":")
        lo, hi = int(lo_text), int(hi_text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected MIN:MAX with integers, got {text!r}"
        ) from None
    if not (1 <= lo <= hi <= 32):
        raise argparse.ArgumentTypeError(
            f"need 1 <= MIN <= MAX <= 32, got {text!r}"
        )
    return lo, hi


def _dims_list(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(d) for d in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise argparse.ArgumentTypeError(
            f"need an input width plus at least one positive layer width, got {text!r}"
        )
    return dims


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ompq",
        description="Layer-orthogonality analysis and bit-width allocation.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    orm = commands.add_parser(
        "orm", help="compute an orthogonality matrix from an activation dump"
    )
    orm.add_argument("--activations", required=True, help="activation dump path")
    orm.add_argument("--out", required=True, help="output matrix CSV path")
    orm.add_argument(
        "--strategy", choices=("auto", "norm", "gram"), default="auto",
        help="pair evaluation form (default: auto, per-pair cost model)",
    )
    orm.add_argument(
        "--workers", type=_positive_int, default=None,
        help="worker threads for the gram and pair phases (default 1; "
        "the OMPQ_WORKERS environment variable wins when set)",
    )
    orm.set_defaults(func=cmd_orm)

    alloc = commands.add_parser(
        "allocate", help="allocate bit-widths under a size budget"
    )
    alloc.add_argument("--orm", required=True, help="orthogonality matrix CSV path")
    alloc.add_argument("--model", required=True, help="model descriptor path")
    alloc.add_argument(
        "--target-size", required=True, type=float, metavar="MB",
        help="weight storage budget in decimal megabytes",
    )
    alloc.add_argument("--beta", type=float, default=1.0,
                       help="importance sharpness (default 1.0)")
    alloc.add_argument(
        "--importance", choices=tuple(_IMPORTANCE_FLAGS), default="exp",
        help="decreasing importance function (default exp)",
    )
    alloc.add_argument(
        "--granularity", choices=("layer", "block", "stage", "net"),
        default="layer", help="grouping of the bit decision (default layer)",
    )
    alloc.add_argument(
        "--bits", type=_bits_range, default=None, metavar="MIN:MAX",
        help="candidate bit range; overrides the descriptor's (default 4:8 "
        "via the descriptor)",
    )
    alloc.add_argument(
        "--abit", type=_positive_int, default=None,
        help="override every layer's activation bit-width",
    )
    alloc.add_argument(
        "--method", choices=("auto", "round", "dfs"), default="auto",
        help="integerization (auto: dfs up to 25 free layers, else round)",
    )
    alloc.add_argument("--report", default=None, help="write a JSON report here")
    alloc.add_argument("--heatmap", default=None, help="write an SVG chart here")
    alloc.set_defaults(func=cmd_allocate)

    toy = commands.add_parser(
        "toynet", help="generate a reproducible synthetic dump and descriptor"
    )
    toy.add_argument("--seed", required=True, type=int, help="net seed (u64)")
    toy.add_argument(
        "--dims", required=True, type=_dims_list,
        help="comma-separated widths: input, then one per layer",
    )
    toy.add_argument("--samples", required=True, type=_positive_int,
                     help="input batch size")
    toy.add_argument("--out-dump", required=True, help="activation dump path")
    toy.add_argument("--out-model", required=True, help="descriptor path")
    toy.add_argument("--block-size", type=_positive_int, default=1,
                     help="layers per block label (default 1)")
    toy.set_defaults(func=cmd_toynet)

    bench = commands.add_parser(
        "bench", help="time norm-form against gram-form on random matrices"
    )
    bench.add_argument("--n", required=True, type=_positive_int, help="samples")
    bench.add_argument("--p", required=True, type=_positive_int, help="features")
    bench.add_argument("--repeats", required=True, type=_positive_int,
                       help="timed repetitions; the minimum is reported")
    bench.set_defaults(func=cmd_bench)
    return parser


def _resolve_workers(flag_value: int | None) -> int:
    env = os.environ.get("OMPQ_WORKERS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise _UsageError(f"OMPQ_WORKERS must be an integer, got {env!r}") from None
        if value < 1:
            raise _UsageError(f"OMPQ_WORKERS must be >= 1, got {value}")
        return value
    return flag_value if flag_value is not None else 1


class _UsageError(Exception):
    pass


def cmd_orm(args) -> int:
    workers = _resolve_workers(args.workers)
    features = read_dump(args.activations)
    computation = compute_orm_matrix(features, args.strategy, workers)
    names = [fm.layer_name for fm in features]
    write_orm_csv(computation.matrix, args.out, names)
    print(
        f"gram build: {computation.gram_seconds:.3f}s, "
        f"pair phase: {computation.pair_seconds:.3f}s "
        f"({computation.norm_pairs} norm-form, {computation.gram_pairs} "
        f"gram-form, {workers} workers)"
    )
    print(f"wrote {len(names)}x{len(names)} matrix to {args.out}")
    return 0


def cmd_allocate(args) -> int:
    matrix = read_orm_csv(args.orm)
    model = read_descriptor(args.model)
    if args.bits is not None:
        model = replace(model, bit_min=args.bits[0], bit_max=args.bits[1])
    if args.abit is not None:
        model = replace(
            model,
            layers=tuple(
                replace(layer, activation_bit=args.abit) for layer in model.layers
            ),
        )
    started = time.perf_counter()
    result = allocate(
        matrix,
        model,
        target_mb=args.target_size,
        beta=args.beta,
        function_id=_IMPORTANCE_FLAGS[args.importance],
        granularity=args.granularity,
        method=args.method,
    )
    elapsed = time.perf_counter() - started
    print(
        f"method={result.method} objective={result.objective_value:.6f} "
        f"size={result.model_size_mb:.6f}MB bops={result.bops_g:.6f}G "
        f"solve={elapsed:.3f}s"
    )
    for layer, bits in zip(model.layers, result.bits):
        print(f"{layer.name} {bits}")
    if args.report or args.heatmap:
        report_path = args.report if args.report else args.heatmap + ".json"
        write_report(
            result, model, report_path,
            matrix=matrix if args.heatmap else None,
            heatmap_path=args.heatmap,
        )
    return 0


def cmd_toynet(args) -> int:
    spec = ToyNetSpec(
        seed=args.seed,
        layer_dims=args.dims,
        nonlinearity="relu",
        block_size=args.block_size,
    )
    net = build(spec)
    inputs = sample_inputs(input_seed_for(spec.seed), args.samples, spec.layer_dims[0])
    features = forward_collect(net, inputs)
    write_dump(features, args.out_dump)
    write_descriptor(descriptor_for(spec), args.out_model)
    print(
        f"toynet seed={spec.seed}: {spec.n_layers} layers, "
        f"{args.samples} samples -> {args.out_dump}, {args.out_model}"
    )
    return 0


def benchmark_strategies(
    n_samples: int, p: int, repeats: int, seed: int = _BENCH_SEED
) -> dict:
    """Time one metric evaluation per strategy on seeded random matrices.

    Returns the minimum seconds over `repeats` for each strategy plus both
    values, so callers can check the forms agree while comparing speed.
    """
    rng = np.random.default_rng(seed)
    fy = FeatureMatrix("Y", rng.standard_normal((n_samples, p)))
    fz = FeatureMatrix("Z", rng.standard_normal((n_samples, p)))

    norm_seconds = []
    norm_value = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        norm_value = orm_pair_norm(fy, fz)
        norm_seconds.append(time.perf_counter() - t0)

    gram_seconds = []
    gram_value = 0.0
    for _ in range(repeats):
        t0 = time.perf_counter()
        gy = gram(fy)
        gz = gram(fz)
        gram_value = orm_pair_gram(gy, gz, gram_norm(gy), gram_norm(gz))
        gram_seconds.append(time.perf_counter() - t0)
        del gy, gz

    return {
        "n": n_samples,
        "p": p,
        "norm_seconds": min(norm_seconds),
        "gram_seconds": min(gram_seconds),
        "norm_value": norm_value,
        "gram_value": gram_value,
    }


def cmd_bench(args) -> int:
    outcome = benchmark_strategies(args.n, args.p, args.repeats)
    norm_s = outcome["norm_seconds"]
    gram_s = outcome["gram_seconds"]
    faster = "norm-form" if norm_s < gram_s else "gram-form"
    ratio = max(norm_s, gram_s) / max(min(norm_s, gram_s), 1e-12)
    drift = abs(outcome["norm_value"] - outcome["gram_value"])
    scale = max(abs(outcome["norm_value"]), abs(outcome["gram_value"]), 1e-300)
    print(f"{'case':<18}{'norm_s':>10}{'gram_s':>10}  {'faster':<10}{'ratio':>8}")
    print(
        f"N={args.n} p={args.p:<8}{norm_s:>10.3f}{gram_s:>10.3f}  "
        f"{faster:<10}{ratio:>7.1f}x"
    )
    print(
        f"values agree to {drift / scale:.2e} relative "
        f"({outcome['norm_value']:.12f} vs {outcome['gram_value']:.12f})"
    )
    return 0


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except Infeasible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OmpqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename else exc
        print(f"error: no such file: {missing}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))
