"""Cycle-model benchmarks: scalar baseline vs vector machine per kernel.

The scalar baseline replays the memory traffic of a single-threaded
triple-nested loop against the same two-level cache model the vector
machine uses, charging full load-to-use latency per element access plus a
per-kernel ALU allowance per element. The vector side runs the real strip-
mined driver on a `VectorMachine` and reports its cycle counter. Both sides
therefore share one memory system definition (the SoC config) and differ
only in access pattern and instruction accounting, which is the comparison
the speedup column expresses.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .memory import CacheConfig, CacheModel, ZeroLatencyMemory
from .tensor import CHANNELS_PER_SURFACE, LayoutDims
from .vkernels import KERNELS
from .vm import CostTable, VectorMachine, VmConfig

BENCH_SIZES = ("small", "medium", "large")

_CONVERTER_DIMS = {"small": (256, 13, 13), "medium": (256, 26, 26),
                   "large": (256, 52, 52)}
BENCH_DIMS = {
    "fd2nchw": _CONVERTER_DIMS,
    "nchw2fd": _CONVERTER_DIMS,
    "quantize": _CONVERTER_DIMS,
    "dequantize": _CONVERTER_DIMS,
    "upsample": _CONVERTER_DIMS,
    "normalize": {"small": (320, 1, 320), "medium": (416, 1, 416),
                  "large": (618, 1, 618)},
}

DEFAULT_SCALAR_OPS = {
    "fd2nchw": 4,
    "nchw2fd": 4,
    "quantize": 4,
    "dequantize": 2,
    "upsample": 2,
    "normalize": 3,
}


@dataclass
class SocConfig:
    """Everything the bench needs to build matched scalar and vector models."""

    maxvl: int = 2048
    zero_stall: bool = False
    cache: CacheConfig = field(default_factory=CacheConfig)
    cost: CostTable = field(default_factory=CostTable)
    scalar_ops: dict = field(default_factory=lambda: dict(DEFAULT_SCALAR_OPS))

    def vm_config(self) -> VmConfig:
        return VmConfig(maxvl=self.maxvl, cost=self.cost)

    def make_memory(self):
        if self.zero_stall:
            return ZeroLatencyMemory()
        return CacheModel(CacheConfig(**vars(self.cache)))


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False, "on": True, "off": False}


def parse_soc_config(path) -> SocConfig:
    """key = value lines; `cost.*` and `scalar_ops.*` prefixes set sub-fields."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read SoC config {path}: {e}") from None
    plain: dict = {}
    cache_kw: dict = {}
    cost_kw: dict = {}
    scalar_ops = dict(DEFAULT_SCALAR_OPS)
    cache_fields = set(CacheConfig.__dataclass_fields__)
    cost_fields = set(CostTable.__dataclass_fields__)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        try:
            if key == "maxvl":
                plain["maxvl"] = int(value)
            elif key == "zero_stall":
                plain["zero_stall"] = _BOOL[value.lower()]
            elif key == "vector_l2_direct":
                cache_kw[key] = _BOOL[value.lower()]
            elif key in cache_fields:
                cache_kw[key] = int(value)
            elif key.startswith("cost."):
                sub = key[5:]
                if sub not in cost_fields:
                    raise ConfigError(f"{path}:{lineno}: unknown cost class {sub!r}")
                cost_kw[sub] = int(value)
            elif key.startswith("scalar_ops."):
                sub = key[11:]
                if sub not in DEFAULT_SCALAR_OPS:
                    raise ConfigError(f"{path}:{lineno}: unknown kernel {sub!r}")
                scalar_ops[sub] = int(value)
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        except (ValueError, KeyError):
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
    return SocConfig(cache=CacheConfig(**cache_kw), cost=CostTable(**cost_kw),
                     scalar_ops=scalar_ops, **plain)


# -- scalar baseline streams ------------------------------------------------------

def _stream_contiguous(model, base: int, count: int, itemsize: int) -> int:
    """Latency of `count` consecutive element accesses starting at base."""
    lb = 64
    cycles = 0
    addr, remaining = base, count
    while remaining > 0:
        in_line = min(remaining, (lb - addr % lb) // itemsize)
        cycles += model.access_run(addr // lb, in_line, port="scalar")
        addr += in_line * itemsize
        remaining -= in_line
    return cycles


def _stream_strided(model, base: int, stride_bytes: int, count: int,
                    itemsize: int) -> int:
    cycles = 0
    for k in range(count):
        cycles += model.access(base + stride_bytes * k, itemsize, port="scalar")
    return cycles


def _scalar_converter(model, case, ops_per_el: int, cost: CostTable) -> int:
    t = case["tensor"]
    n, c, h, w = t.shape
    dims = LayoutDims(w=w, h=h, c=c)
    itemsize = t.dtype.np_dtype.itemsize
    fd = model.space.register("fd", np.zeros(n * dims.fd_size(), t.dtype.np_dtype))
    nchw = model.space.register("nchw", np.zeros(n * dims.nchw_size(), t.dtype.np_dtype))
    stride = CHANNELS_PER_SURFACE * itemsize
    cycles = 0
    for b in range(n):
        fd_b = fd.base + b * dims.fd_size() * itemsize
        nchw_b = nchw.base + b * dims.nchw_size() * itemsize
        for i in range(c):
            surf = dims.surface_stride * (i // 32) + i % 32
            for j in range(h):
                fd_row = fd_b + (surf + dims.line_stride * j) * itemsize
                nchw_row = nchw_b + (w * h * i + w * j) * itemsize
                cycles += _stream_strided(model, fd_row, stride, w, itemsize)
                cycles += _stream_contiguous(model, nchw_row, w, itemsize)
                cycles += w * ops_per_el * cost.scalar_move
    return cycles


def _scalar_elementwise(model, count: int, in_itemsize: int, out_itemsize: int,
                        ops_per_el: int, cost: CostTable) -> int:
    src = model.space.register("src", np.zeros(count * in_itemsize, np.int8))
    dst = model.space.register("dst", np.zeros(count * out_itemsize, np.int8))
    cycles = _stream_contiguous(model, src.base, count, in_itemsize)
    cycles += _stream_contiguous(model, dst.base, count, out_itemsize)
    return cycles + count * ops_per_el * cost.scalar_move


def _scalar_upsample(model, case, ops_per_el: int, cost: CostTable) -> int:
    t, f = case["tensor"], case["factor"]
    n, c, h, w = t.shape
    itemsize = t.dtype.np_dtype.itemsize
    src = model.space.register("src", np.zeros(n * c * h * w, t.dtype.np_dtype))
    dst = model.space.register("dst", np.zeros(n * c * h * f * w * f, t.dtype.np_dtype))
    w_out = w * f
    cycles = 0
    for plane in range(n * c):
        in_plane = src.base + plane * h * w * itemsize
        out_plane = dst.base + plane * h * f * w_out * itemsize
        for j_out in range(h * f):
            in_row = in_plane + (j_out // f) * w * itemsize
            cycles += _stream_contiguous(model, in_row, w, itemsize)
            cycles += _stream_contiguous(model, out_plane + j_out * w_out * itemsize,
                                         w_out, itemsize)
            cycles += w_out * ops_per_el * cost.scalar_move
    return cycles


def scalar_model_cycles(name: str, case, soc: SocConfig) -> tuple[int, int]:
    """(cycles, stall_cycles) for the scalar baseline of one kernel case."""
    model = soc.make_memory()
    ops = soc.scalar_ops[name]
    if name in ("fd2nchw", "nchw2fd"):
        cycles = _scalar_converter(model, case, ops, soc.cost)
    elif name == "quantize":
        cycles = _scalar_elementwise(model, len(case["tensor"].data), 4, 1, ops, soc.cost)
    elif name == "dequantize":
        cycles = _scalar_elementwise(model, len(case["tensor"].data), 1, 4, ops, soc.cost)
    elif name == "normalize":
        cycles = _scalar_elementwise(model, case["plane"].size, 1, 4, ops, soc.cost)
    elif name == "upsample":
        cycles = _scalar_upsample(model, case, ops, soc.cost)
    else:
        raise ConfigError(f"no scalar model for kernel {name!r}")
    return cycles, model.stats.stall_cycles


# -- runner -------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchRow:
    kernel: str
    size: str
    variant: str
    cycles: int
    stalls: int
    speedup: float


def bench_kernel(name: str, size: str, soc: SocConfig, seed: int = 0,
                 prefetch: str = "both") -> list[BenchRow]:
    """Rows for one kernel at one size: scalar plus requested vector variants."""
    if name not in KERNELS:
        raise ConfigError(f"unknown kernel {name!r}")
    if size not in BENCH_SIZES:
        raise ConfigError(f"unknown size {size!r}")
    if prefetch not in ("on", "off", "both"):
        raise ConfigError(f"prefetch must be on/off/both, got {prefetch!r}")
    spec = KERNELS[name]
    c, h, w = BENCH_DIMS[name][size]
    case = spec.make_case(np.random.default_rng(seed), c, h, w)
    scalar_cycles, scalar_stalls = scalar_model_cycles(name, case, soc)
    rows = [BenchRow(name, size, "scalar", scalar_cycles, scalar_stalls, 1.0)]
    variants = []
    if prefetch in ("off", "both"):
        variants.append(("vector", False))
    if prefetch in ("on", "both") and spec.supports_prefetch:
        variants.append(("vector+prefetch", True))
    for variant, pf in variants:
        vm = VectorMachine(soc.vm_config(), memory=soc.make_memory())
        spec.vector(vm, case, pf)
        total, breakdown = vm.cycles()
        rows.append(BenchRow(name, size, variant, total, breakdown["stall"],
                             scalar_cycles / total))
    return rows


def format_bench_csv(rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["kernel", "size", "variant", "cycles", "stalls", "speedup"])
    for r in rows:
        w.writerow([r.kernel, r.size, r.variant, r.cycles, r.stalls,
                    f"{r.speedup:.4f}"])
    return out.getvalue()
