"""Strip-mined vector implementations of the fallback kernels.

Each driver here programs a `VectorMachine` to produce bit-identical output
to its scalar counterpart in `kernels`/`tensor`. Bitwise agreement holds by
construction for the data path: the vmap stage runs the very same
elementwise numpy function the scalar kernel uses, one strip at a time, and
loads/stores only move bytes.

All drivers share the same shape: plan strips of at most MAXVL elements,
then per strip move base addresses into aregs with `vmca` and dispatch a
small fixed program with `vfetch`. The feature-depth converters walk
(channel, row) pairs and charge two scalar address-setup cycles per row,
which gives them the closed form checked by `predicted_cycles_fd_to_nchw`.

`prefetch=True` makes a driver hint every cache line of the strip that runs
`prefetch_distance` strips later, right before dispatching the current one,
so the hints are mature by the time their strip issues. Hints never change
what data is produced, only the stall column of the trace.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ShapeError
from .kernels import (
    QuantParams,
    compute_scale,
    dequantize_elements,
    normalize_elements,
    quantize_elements,
    upsample_nearest,
)
from .tensor import (
    CHANNELS_PER_SURFACE,
    Dtype,
    Layout,
    LayoutDims,
    Tensor,
    convert_fd_to_nchw,
    convert_nchw_to_fd,
    required_size,
)
from .vm import (
    CostTable,
    VLoad,
    VMap,
    VStore,
    VectorKernelProgram,
    VectorMachine,
    register_vmap_fn,
    strip_plan,
)

register_vmap_fn("quantize_i8", quantize_elements)
register_vmap_fn("dequantize_f32", dequantize_elements)
register_vmap_fn("normalize_u8f32", normalize_elements)

FD2NCHW_PROG = VectorKernelProgram(
    "fd2nchw", (VLoad(0, base_areg=0, stride_areg=2), VStore(0, base_areg=1)), vregs=1)
NCHW2FD_PROG = VectorKernelProgram(
    "nchw2fd", (VLoad(0, base_areg=0), VStore(0, base_areg=1, stride_areg=2)), vregs=1)
QUANTIZE_PROG = VectorKernelProgram(
    "quantize", (VLoad(0, 0), VMap(1, 0, "quantize_i8"), VStore(1, 1)), vregs=2)
DEQUANTIZE_PROG = VectorKernelProgram(
    "dequantize", (VLoad(0, 0), VMap(1, 0, "dequantize_f32"), VStore(1, 1)), vregs=2)
NORMALIZE_PROG = VectorKernelProgram(
    "normalize", (VLoad(0, 0), VMap(1, 0, "normalize_u8f32"), VStore(1, 1)), vregs=2)
UPSAMPLE_LOAD_PROG = VectorKernelProgram("upsample_load", (VLoad(0, 0),), vregs=1)
UPSAMPLE_STORE_PROG = VectorKernelProgram(
    "upsample_store", (VStore(0, base_areg=1, stride_areg=2),), vregs=1)


# -- prefetch helpers ---------------------------------------------------------

def _strided_lines(base: int, stride_bytes: int, count: int, lb: int) -> list:
    addrs = base + stride_bytes * np.arange(count, dtype=np.int64)
    return (np.unique(addrs // lb) * lb).tolist()


def _span_lines(base: int, nbytes: int, lb: int) -> list:
    if nbytes <= 0:
        return []
    return [ln * lb for ln in range(base // lb, (base + nbytes - 1) // lb + 1)]


def _lookahead(vm: VectorMachine) -> int:
    cfg = getattr(vm.memory, "config", None)
    return cfg.prefetch_distance if cfg is not None else 1


# -- feature-depth converters ---------------------------------------------------

def _converter_records(base_in, base_out, dims: LayoutDims, n, itemsize, plan,
                       fd_to_nchw: bool):
    """Flat strip schedule: (row_start, fd_addr, nchw_addr, length) per strip."""
    w, h, c = dims.w, dims.h, dims.c
    records = []
    for b in range(n):
        fd_b = (base_in if fd_to_nchw else base_out) + b * dims.fd_size() * itemsize
        nchw_b = (base_out if fd_to_nchw else base_in) + b * dims.nchw_size() * itemsize
        for i in range(c):
            surf = dims.surface_stride * (i // CHANNELS_PER_SURFACE) + i % CHANNELS_PER_SURFACE
            for j in range(h):
                fd_row = fd_b + (surf + dims.line_stride * j) * itemsize
                nchw_row = nchw_b + (w * h * i + w * j) * itemsize
                for s_idx, (off, length) in enumerate(plan.strips):
                    records.append((s_idx == 0,
                                    fd_row + off * CHANNELS_PER_SURFACE * itemsize,
                                    nchw_row + off * itemsize,
                                    length))
    return records


def _run_converter(vm: VectorMachine, t: Tensor, dims: LayoutDims,
                   fd_to_nchw: bool, prefetch: bool) -> Tensor:
    src_layout = Layout.FEATURE_DEPTH if fd_to_nchw else Layout.NCHW
    dst_layout = Layout.NCHW if fd_to_nchw else Layout.FEATURE_DEPTH
    if t.layout is not src_layout:
        raise ShapeError(f"expected {src_layout.name} input, got {t.layout.name}")
    n = t.shape[0]
    if len(t.data) != required_size(t.shape, src_layout):
        raise ShapeError("tensor data does not match its shape for this layout")
    itemsize = t.dtype.np_dtype.itemsize
    out = np.zeros(required_size(t.shape, dst_layout), dtype=t.dtype.np_dtype)
    tag = "fd2nchw" if fd_to_nchw else "nchw2fd"
    base_in = vm.register_buffer(f"{tag}_in", t.data)
    base_out = vm.register_buffer(f"{tag}_out", out)
    prog = FD2NCHW_PROG if fd_to_nchw else NCHW2FD_PROG
    vm.register_kernel(prog)
    vm.setvcfg(1, 1)
    plan = strip_plan(dims.w, vm.config.maxvl)
    fd_stride = CHANNELS_PER_SURFACE * itemsize
    records = _converter_records(base_in, base_out, dims, n, itemsize, plan, fd_to_nchw)
    dist = _lookahead(vm)
    lb = vm.space.line_bytes
    for g, (row_start, fd_addr, nchw_addr, length) in enumerate(records):
        if row_start:
            vm.scalar_ops(2)
        if prefetch and g + dist < len(records):
            _, h_fd, h_nchw, h_len = records[g + dist]
            for a in _strided_lines(h_fd, fd_stride, h_len, lb):
                vm.prefetch(a)
            for a in _span_lines(h_nchw, h_len * itemsize, lb):
                vm.prefetch(a)
        vm.setvlen(length)
        vm.vmca(0, fd_addr if fd_to_nchw else nchw_addr)
        vm.vmca(1, nchw_addr if fd_to_nchw else fd_addr)
        vm.vmca(2, fd_stride)
        vm.vfetch(prog.name)
    vm.fence()
    # out buffer was written in place by the machine
    return Tensor(shape=t.shape, dtype=t.dtype, layout=dst_layout, data=out)


def v_convert_fd_to_nchw(vm: VectorMachine, t: Tensor, dims: LayoutDims | None = None,
                         prefetch: bool = False) -> Tensor:
    """Feature-depth to NCHW on the vector machine; see convert_fd_to_nchw."""
    n, c, h, w = t.shape
    dims = dims or LayoutDims(w=w, h=h, c=c)
    return _run_converter(vm, t, dims, fd_to_nchw=True, prefetch=prefetch)


def v_convert_nchw_to_fd(vm: VectorMachine, t: Tensor, dims: LayoutDims | None = None,
                         prefetch: bool = False) -> Tensor:
    n, c, h, w = t.shape
    dims = dims or LayoutDims(w=w, h=h, c=c)
    return _run_converter(vm, t, dims, fd_to_nchw=False, prefetch=prefetch)


def predicted_cycles_fd_to_nchw(dims: LayoutDims, maxvl: int = 2048,
                                cost: CostTable | None = None, n: int = 1) -> int:
    """Closed-form cycle count for the zero-stall fd->nchw conversion.

    setup + rows * (2 scalar + strips * (3 moves + dispatch + load + store))
    with rows = n*c*h and strips = ceil(w/maxvl). Matches the machine exactly
    under any cost table because the driver issues exactly that instruction
    sequence.
    """
    cost = cost or CostTable()
    strips = len(strip_plan(dims.w, maxvl).strips)
    per_strip = 3 * cost.scalar_move + cost.fetch_dispatch + 2 * cost.strip_compute
    rows = n * dims.c * dims.h
    return cost.setup + rows * (2 * cost.scalar_move + strips * per_strip) + cost.fence


# -- flat elementwise kernels ----------------------------------------------------

def _run_elementwise(vm: VectorMachine, prog: VectorKernelProgram, src: np.ndarray,
                     out: np.ndarray, args: dict, prefetch: bool) -> None:
    base_in = vm.register_buffer(f"{prog.name}_in", src)
    base_out = vm.register_buffer(f"{prog.name}_out", out)
    vm.register_kernel(prog)
    vm.setvcfg(2)
    in_is, out_is = src.itemsize, out.itemsize
    plan = strip_plan(len(src), vm.config.maxvl)
    dist = _lookahead(vm)
    lb = vm.space.line_bytes
    strips = plan.strips
    for g, (off, length) in enumerate(strips):
        if prefetch and g + dist < len(strips):
            h_off, h_len = strips[g + dist]
            for a in _span_lines(base_in + h_off * in_is, h_len * in_is, lb):
                vm.prefetch(a)
            for a in _span_lines(base_out + h_off * out_is, h_len * out_is, lb):
                vm.prefetch(a)
        vm.setvlen(length)
        vm.vmca(0, base_in + off * in_is)
        vm.vmca(1, base_out + off * out_is)
        vm.vfetch(prog.name, args=args)
    vm.fence()


def v_quantize(vm: VectorMachine, t: Tensor, q: QuantParams,
               prefetch: bool = False) -> Tensor:
    if t.dtype is not Dtype.FP32:
        raise ShapeError(f"quantize expects fp32 input, got {t.dtype.name}")
    out = np.zeros(len(t.data), dtype=np.int8)
    _run_elementwise(vm, QUANTIZE_PROG, t.data, out, {"scale": q.scale}, prefetch)
    return Tensor(t.shape, Dtype.INT8, t.layout, out)


def v_dequantize(vm: VectorMachine, t: Tensor, q: QuantParams,
                 prefetch: bool = False) -> Tensor:
    if t.dtype is not Dtype.INT8:
        raise ShapeError(f"dequantize expects int8 input, got {t.dtype.name}")
    out = np.zeros(len(t.data), dtype=np.float32)
    _run_elementwise(vm, DEQUANTIZE_PROG, t.data, out, {"scale": q.scale}, prefetch)
    return Tensor(t.shape, Dtype.FP32, t.layout, out)


def v_normalize(vm: VectorMachine, plane: np.ndarray, divisor: float = 255.0,
                prefetch: bool = False) -> np.ndarray:
    """uint8 image plane -> float32 in [0, 1], strip by strip."""
    p = np.ascontiguousarray(plane, dtype=np.uint8)
    out = np.zeros(p.size, dtype=np.float32)
    _run_elementwise(vm, NORMALIZE_PROG, p.ravel(), out, {"divisor": divisor}, prefetch)
    return out.reshape(p.shape)


# -- nearest-neighbor upsample ------------------------------------------------------

def v_upsample(vm: VectorMachine, t: Tensor, factor: int) -> Tensor:
    """Load each input row once, then scatter it factor^2 times with stride.

    out[j*f + dy, k*f + p] = in[j, k]: one strided store per (dy, p) phase
    reuses the row already sitting in v0, so the input is read exactly once.
    """
    if t.layout is not Layout.NCHW:
        raise ShapeError("upsample expects NCHW input")
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ShapeError(f"factor must be a positive integer, got {factor!r}")
    f = int(factor)
    n, c, h, w = t.shape
    itemsize = t.dtype.np_dtype.itemsize
    out = np.zeros(n * c * h * f * w * f, dtype=t.dtype.np_dtype)
    base_in = vm.register_buffer("upsample_in", t.data)
    base_out = vm.register_buffer("upsample_out", out)
    vm.register_kernel(UPSAMPLE_LOAD_PROG)
    vm.register_kernel(UPSAMPLE_STORE_PROG)
    vm.setvcfg(1)
    plan = strip_plan(w, vm.config.maxvl)
    w_out = w * f
    for plane in range(n * c):
        in_plane = base_in + plane * h * w * itemsize
        out_plane = base_out + plane * h * f * w_out * itemsize
        for j in range(h):
            in_row = in_plane + j * w * itemsize
            for off, length in plan.strips:
                vm.setvlen(length)
                vm.vmca(0, in_row + off * itemsize)
                vm.vfetch("upsample_load")
                for dy in range(f):
                    out_row = out_plane + (j * f + dy) * w_out * itemsize
                    for p in range(f):
                        vm.vmca(1, out_row + (off * f + p) * itemsize)
                        vm.vmca(2, f * itemsize)
                        vm.vfetch("upsample_store")
    vm.fence()
    return Tensor((n, c, h * f, w * f), t.dtype, t.layout, out)


# -- registry used by verify/bench -------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """One dual-route kernel: seeded case builder plus both implementations."""

    name: str
    supports_prefetch: bool
    make_case: Callable
    scalar: Callable
    vector: Callable


def _case_fd2nchw(rng, c, h, w):
    nchw = Tensor((1, c, h, w), Dtype.FP32, Layout.NCHW,
                  rng.standard_normal(c * h * w).astype(np.float32))
    return {"tensor": convert_nchw_to_fd(nchw)}


def _case_nchw2fd(rng, c, h, w):
    return {"tensor": Tensor((1, c, h, w), Dtype.FP32, Layout.NCHW,
                             rng.standard_normal(c * h * w).astype(np.float32))}


def _case_quantize(rng, c, h, w):
    data = (rng.standard_normal(c * h * w) * 3).astype(np.float32)
    t = Tensor((1, c, h, w), Dtype.FP32, Layout.NCHW, data)
    return {"tensor": t, "q": compute_scale(t)}


def _case_dequantize(rng, c, h, w):
    data = rng.integers(-128, 128, size=c * h * w).astype(np.int8)
    t = Tensor((1, c, h, w), Dtype.INT8, Layout.NCHW, data)
    return {"tensor": t, "q": QuantParams(scale=float(rng.uniform(0.005, 0.05)))}


def _case_upsample(rng, c, h, w):
    t = Tensor((1, c, h, w), Dtype.FP32, Layout.NCHW,
               rng.standard_normal(c * h * w).astype(np.float32))
    return {"tensor": t, "factor": int(rng.integers(2, 4))}


def _case_normalize(rng, c, h, w):
    return {"plane": rng.integers(0, 256, size=(c * h, w)).astype(np.uint8)}


KERNELS: dict[str, KernelSpec] = {
    "fd2nchw": KernelSpec(
        "fd2nchw", True, _case_fd2nchw,
        scalar=lambda case: convert_fd_to_nchw(case["tensor"]).data,
        vector=lambda vm, case, pf: v_convert_fd_to_nchw(vm, case["tensor"],
                                                         prefetch=pf).data),
    "nchw2fd": KernelSpec(
        "nchw2fd", True, _case_nchw2fd,
        scalar=lambda case: convert_nchw_to_fd(case["tensor"]).data,
        vector=lambda vm, case, pf: v_convert_nchw_to_fd(vm, case["tensor"],
                                                         prefetch=pf).data),
    "quantize": KernelSpec(
        "quantize", True, _case_quantize,
        scalar=lambda case: quantize_elements(case["tensor"].data, case["q"].scale),
        vector=lambda vm, case, pf: v_quantize(vm, case["tensor"], case["q"],
                                               prefetch=pf).data),
    "dequantize": KernelSpec(
        "dequantize", True, _case_dequantize,
        scalar=lambda case: dequantize_elements(case["tensor"].data, case["q"].scale),
        vector=lambda vm, case, pf: v_dequantize(vm, case["tensor"], case["q"],
                                                 prefetch=pf).data),
    "upsample": KernelSpec(
        "upsample", False, _case_upsample,
        scalar=lambda case: upsample_nearest(case["tensor"], case["factor"]).data,
        vector=lambda vm, case, pf: v_upsample(vm, case["tensor"], case["factor"]).data),
    "normalize": KernelSpec(
        "normalize", True, _case_normalize,
        scalar=lambda case: normalize_elements(case["plane"].ravel()).reshape(
            case["plane"].shape),
        vector=lambda vm, case, pf: v_normalize(vm, case["plane"], prefetch=pf)),
}


def check_kernel(name: str, rng, c: int, h: int, w: int,
                 vm: VectorMachine | None = None) -> bool:
    """Run one seeded case through both routes; True iff outputs are bit-identical."""
    spec = KERNELS[name]
    case = spec.make_case(rng, c, h, w)
    want = spec.scalar(case)
    got = spec.vector(vm if vm is not None else VectorMachine(), case, False)
    return want.dtype == got.dtype and want.tobytes() == got.tobytes()
