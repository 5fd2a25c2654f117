"""vecboost command line: verify, bench, pipeline, convert.

Exit codes: 0 success, 1 verification or data failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import BENCH_SIZES, bench_kernel, format_bench_csv, parse_soc_config
from .errors import ConfigError, VecBoostError
from .kernels import letterbox_preprocess, load_ppm, normalize_elements
from .pipeline import (
    apply_remap,
    default_config_path,
    load_layer_table,
    load_remap_rules,
    report,
)
from .tensor import write_vbt
from .vkernels import KERNELS, v_normalize
from .vm import VectorMachine

# Default verify sweep: ragged and full surfaces, strip boundaries, tiny edges.
VERIFY_SWEEP = (
    (1, 1, 1),
    (1, 3, 70),
    (31, 2, 33),
    (32, 4, 52),
    (33, 3, 64),
    (64, 2, 130),
    (5, 1, 2048),
    (3, 1, 2049),
    (2, 2, 4096),
)


def _fail(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_verify(args) -> int:
    if args.kernel not in KERNELS:
        _fail(f"unknown kernel {args.kernel!r} (have: {', '.join(sorted(KERNELS))})")
        return 2
    spec = KERNELS[args.kernel]
    explicit = [v for v in (args.c, args.h, args.w) if v is not None]
    if explicit and any(v < 1 for v in explicit):
        _fail("dimensions must be positive")
        return 2
    if explicit:
        shapes = [(args.c or 8, args.h or 8, args.w or 64)]
    else:
        shapes = list(VERIFY_SWEEP)
    rng = np.random.default_rng(args.seed)
    failures = 0
    for c, h, w in shapes:
        case = spec.make_case(rng, c, h, w)
        want = spec.scalar(case)
        got = spec.vector(VectorMachine(), case, False)
        if args.inject_fault:
            got = got.copy()
            got.reshape(-1)[0] = got.reshape(-1)[0] + np.asarray(1, got.dtype)
        if want.tobytes() == got.tobytes():
            print(f"{args.kernel} c={c} h={h} w={w}: ok ({want.size} elements)")
            continue
        failures += 1
        diff = np.flatnonzero(want.reshape(-1) != got.reshape(-1))
        print(f"{args.kernel} c={c} h={h} w={w}: MISMATCH at {diff.size} indices")
        for idx in diff[:10]:
            print(f"  [{idx}] scalar={want.reshape(-1)[idx]!r} "
                  f"vector={got.reshape(-1)[idx]!r}")
    if failures:
        _fail(f"{failures} of {len(shapes)} cases differ")
        return 1
    return 0


def cmd_bench(args) -> int:
    soc = parse_soc_config(args.soc)
    kernels = sorted(KERNELS) if args.kernel == "all" else [args.kernel]
    for k in kernels:
        if k not in KERNELS:
            _fail(f"unknown kernel {k!r} (have: {', '.join(sorted(KERNELS))})")
            return 2
    sizes = list(BENCH_SIZES) if args.size == "all" else [args.size]
    rows = []
    for kernel in kernels:
        for size in sizes:
            rows.extend(bench_kernel(kernel, size, soc, seed=args.seed,
                                     prefetch=args.prefetch))
    text = format_bench_csv(rows)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        print(text, end="")
    return 0


_REMAP_SIZE_FOR = {"small": "small", "standard": "medium", "large": "large"}


def cmd_pipeline(args) -> int:
    graph = load_layer_table(args.layers)
    rules = ()
    after = graph
    if args.remap:
        remap_size = args.remap_size or _REMAP_SIZE_FOR[args.size]
        rules = load_remap_rules(args.remap, remap_size)
        after = apply_remap(graph, rules)
    rep = report(graph, after, args.size, rules=rules)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    if args.csv:
        Path(args.csv).write_text(rep.to_csv())
        print(f"wrote {args.csv}")
    return 0


def cmd_convert(args) -> int:
    if args.target < 1:
        _fail("target size must be positive")
        return 2
    img = load_ppm(args.input)
    tensor = letterbox_preprocess(img, args.target)
    write_vbt(args.out, tensor)
    print(f"wrote {args.out}: shape {tensor.shape}, {tensor.dtype.name}, "
          f"{tensor.layout.name}")
    if args.compare_vector:
        plane = img.pixels.reshape(img.height, img.width * 3)
        want = normalize_elements(plane.ravel())
        got = v_normalize(VectorMachine(), plane).ravel()
        if want.tobytes() != got.tobytes():
            _fail("vector normalize path disagrees with scalar")
            return 1
        print(f"vector normalize path matches scalar on {want.size} elements")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecboost",
        description="Scalar/vector kernel verification, cycle-model benchmarks, "
                    "and pipeline latency analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="check vector kernels against scalar oracles")
    p.add_argument("kernel", help="kernel name, e.g. fd2nchw")
    p.add_argument("--c", type=int, help="channels (default: shape sweep)")
    p.add_argument("--h", type=int, help="height")
    p.add_argument("--w", type=int, help="width")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="run cycle-model benchmarks, emit CSV")
    p.add_argument("kernel", help="kernel name or 'all'")
    p.add_argument("--size", default="all", choices=(*BENCH_SIZES, "all"))
    p.add_argument("--soc", default=str(default_config_path("soc_default.cfg")),
                   help="SoC model config file")
    p.add_argument("--prefetch", default="both", choices=("on", "off", "both"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pipeline", help="pipeline latency report (JSON)")
    p.add_argument("--layers", default=str(default_config_path("yolov3_layers.cfg")))
    p.add_argument("--remap", help="remap rules config; omit for a no-change report")
    p.add_argument("--size", default="standard", choices=("small", "standard", "large"))
    p.add_argument("--remap-size", choices=("small", "medium", "large"),
                   help="remap rule size class (default: matches --size)")
    p.add_argument("--out", help="JSON output path (default: stdout)")
    p.add_argument("--csv", help="also write the CSV form here")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("convert", help="letterbox a PPM image into a VBT tensor")
    p.add_argument("input", help="binary PPM (P6) image path")
    p.add_argument("--target", type=int, default=416, help="square output size")
    p.add_argument("--out", default="out.vbt", help="VBT output path")
    p.add_argument("--compare-vector", action="store_true",
                   help="also run the vector normalize path and compare")
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ConfigError as e:
        _fail(str(e))
        return 2
    except (VecBoostError, OSError) as e:
        _fail(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
