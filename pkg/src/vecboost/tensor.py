"""Tensor containers, feature-depth offset math, layout conversion, VBT file io.

Two layouts are modelled. NCHW is the usual planar order. The feature-depth
(FD) layout is the accelerator-native order: channels are packed in groups of
32 ("surfaces"), and within a surface the 32 channel lanes of one (row, col)
position sit contiguously. Strides, in elements:

    line_stride    = w * 32
    surface_stride = line_stride * h
    fd_offset(i, j, k) = surface_stride * (i // 32) + line_stride * j
                         + 32 * k + (i % 32)

for channel i, row j, column k. A tensor whose channel count is not a
multiple of 32 still occupies whole surfaces; the unused lanes are zero.
Both dtypes (fp32, int8) use the same element-indexed strides.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BoundsError, FormatError, ShapeError

CHANNELS_PER_SURFACE = 32

VBT_MAGIC = b"VBT1"
_VBT_HEADER = struct.Struct("<6I")  # dtype, layout, n, c, h, w


class Dtype(Enum):
    FP32 = "fp32"
    INT8 = "int8"

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype("<f4") if self is Dtype.FP32 else np.dtype("i1")

    @property
    def itemsize(self) -> int:
        return self.np_dtype.itemsize


class Layout(Enum):
    NCHW = "nchw"
    FEATURE_DEPTH = "fd"


_DTYPE_CODES = {Dtype.FP32: 0, Dtype.INT8: 1}
_LAYOUT_CODES = {Layout.NCHW: 0, Layout.FEATURE_DEPTH: 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_CODE_LAYOUTS = {v: k for k, v in _LAYOUT_CODES.items()}


@dataclass(frozen=True)
class LayoutDims:
    """Spatial extent of one batch item: width, height, channels."""

    w: int
    h: int
    c: int

    def __post_init__(self) -> None:
        for name in ("w", "h", "c"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ShapeError(f"{name} must be a positive integer, got {v!r}")

    @property
    def line_stride(self) -> int:
        return self.w * CHANNELS_PER_SURFACE

    @property
    def surface_stride(self) -> int:
        return self.line_stride * self.h

    @property
    def num_surfaces(self) -> int:
        return -(-self.c // CHANNELS_PER_SURFACE)

    def nchw_size(self) -> int:
        return self.c * self.h * self.w

    def fd_size(self) -> int:
        return self.num_surfaces * self.surface_stride


def _check_index(dims: LayoutDims, i: int, j: int, k: int) -> None:
    if not (0 <= i < dims.c and 0 <= j < dims.h and 0 <= k < dims.w):
        raise BoundsError(
            f"index (i={i}, j={j}, k={k}) outside dims (c={dims.c}, h={dims.h}, w={dims.w})"
        )


def nchw_offset(dims: LayoutDims, i: int, j: int, k: int) -> int:
    """Flat element offset of channel i, row j, column k in NCHW order."""
    _check_index(dims, i, j, k)
    return dims.w * dims.h * i + dims.w * j + k


def fd_offset(dims: LayoutDims, i: int, j: int, k: int) -> int:
    """Flat element offset of channel i, row j, column k in feature-depth order."""
    _check_index(dims, i, j, k)
    return (
        dims.surface_stride * (i // CHANNELS_PER_SURFACE)
        + dims.line_stride * j
        + CHANNELS_PER_SURFACE * k
        + (i % CHANNELS_PER_SURFACE)
    )


def required_size(shape: tuple[int, int, int, int], layout: Layout) -> int:
    """Element count a buffer must hold for `shape` in `layout` (padding included)."""
    n, c, h, w = shape
    if n < 1:
        raise ShapeError(f"batch dimension must be positive, got {n}")
    dims = LayoutDims(w=w, h=h, c=c)
    per_item = dims.nchw_size() if layout is Layout.NCHW else dims.fd_size()
    return n * per_item


@dataclass
class Tensor:
    """A flat buffer plus the shape/dtype/layout needed to interpret it.

    `data` is always a 1-D little-endian numpy array of exactly
    `required_size(shape, layout)` elements.
    """

    shape: tuple[int, int, int, int]
    dtype: Dtype
    layout: Layout
    data: np.ndarray

    def __post_init__(self) -> None:
        if len(self.shape) != 4:
            raise ShapeError(f"shape must be (n, c, h, w), got {self.shape!r}")
        self.shape = tuple(int(v) for v in self.shape)
        need = required_size(self.shape, self.layout)
        arr = np.asarray(self.data, dtype=self.dtype.np_dtype)
        if arr.ndim != 1 or arr.size != need:
            raise ShapeError(
                f"data has {arr.size} elements, {self.layout.value} {self.shape} needs {need}"
            )
        self.data = np.ascontiguousarray(arr)

    @property
    def dims(self) -> LayoutDims:
        n, c, h, w = self.shape
        return LayoutDims(w=w, h=h, c=c)

    @property
    def item_size(self) -> int:
        """Elements per batch item in this layout."""
        d = self.dims
        return d.nchw_size() if self.layout is Layout.NCHW else d.fd_size()

    @classmethod
    def zeros(cls, shape, dtype: Dtype = Dtype.FP32, layout: Layout = Layout.NCHW) -> "Tensor":
        return cls(tuple(shape), dtype, layout, np.zeros(required_size(tuple(shape), layout), dtype.np_dtype))

    def copy(self) -> "Tensor":
        return Tensor(self.shape, self.dtype, self.layout, self.data.copy())


def _index_grids(dims: LayoutDims) -> tuple[np.ndarray, np.ndarray]:
    """Flat (nchw, fd) offsets for every (i, j, k) of one batch item."""
    i = np.arange(dims.c, dtype=np.int64)[:, None, None]
    j = np.arange(dims.h, dtype=np.int64)[None, :, None]
    k = np.arange(dims.w, dtype=np.int64)[None, None, :]
    nchw = dims.w * dims.h * i + dims.w * j + k
    fd = (
        dims.surface_stride * (i // CHANNELS_PER_SURFACE)
        + dims.line_stride * j
        + CHANNELS_PER_SURFACE * k
        + (i % CHANNELS_PER_SURFACE)
    )
    return nchw.ravel(), fd.ravel()


def _check_dims(t: Tensor, dims: LayoutDims | None) -> LayoutDims:
    if dims is None:
        return t.dims
    if dims != t.dims:
        raise ShapeError(f"dims {dims} do not match tensor dims {t.dims}")
    return dims


def convert_fd_to_nchw(t: Tensor, dims: LayoutDims | None = None) -> Tensor:
    """Gather a feature-depth tensor into NCHW order (pure data movement)."""
    if t.layout is not Layout.FEATURE_DEPTH:
        raise ShapeError(f"expected a feature-depth tensor, got {t.layout.value}")
    dims = _check_dims(t, dims)
    n = t.shape[0]
    nchw_idx, fd_idx = _index_grids(dims)
    out = np.empty(n * dims.nchw_size(), dtype=t.dtype.np_dtype)
    in_item, out_item = dims.fd_size(), dims.nchw_size()
    for b in range(n):
        out[b * out_item + nchw_idx] = t.data[b * in_item + fd_idx]
    return Tensor(t.shape, t.dtype, Layout.NCHW, out)


def convert_nchw_to_fd(t: Tensor, dims: LayoutDims | None = None) -> Tensor:
    """Scatter an NCHW tensor into feature-depth order; padding lanes are zero."""
    if t.layout is not Layout.NCHW:
        raise ShapeError(f"expected an NCHW tensor, got {t.layout.value}")
    dims = _check_dims(t, dims)
    n = t.shape[0]
    nchw_idx, fd_idx = _index_grids(dims)
    out = np.zeros(n * dims.fd_size(), dtype=t.dtype.np_dtype)
    in_item, out_item = dims.nchw_size(), dims.fd_size()
    for b in range(n):
        out[b * out_item + fd_idx] = t.data[b * in_item + nchw_idx]
    return Tensor(t.shape, t.dtype, Layout.FEATURE_DEPTH, out)


def write_vbt(path, t: Tensor) -> None:
    """Serialize a tensor: magic "VBT1", six LE u32 header words, raw LE payload."""
    header = _VBT_HEADER.pack(
        _DTYPE_CODES[t.dtype], _LAYOUT_CODES[t.layout], *t.shape
    )
    with open(path, "wb") as f:
        f.write(VBT_MAGIC)
        f.write(header)
        f.write(np.ascontiguousarray(t.data, dtype=t.dtype.np_dtype).tobytes())


def read_vbt(path) -> Tensor:
    """Parse a VBT file, validating magic, header codes, and exact payload size."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < len(VBT_MAGIC) + _VBT_HEADER.size:
        raise FormatError(f"{path}: file too short for a VBT header")
    if blob[: len(VBT_MAGIC)] != VBT_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    dcode, lcode, n, c, h, w = _VBT_HEADER.unpack_from(blob, len(VBT_MAGIC))
    if dcode not in _CODE_DTYPES:
        raise FormatError(f"{path}: unknown dtype code {dcode}")
    if lcode not in _CODE_LAYOUTS:
        raise FormatError(f"{path}: unknown layout code {lcode}")
    dtype, layout = _CODE_DTYPES[dcode], _CODE_LAYOUTS[lcode]
    try:
        need = required_size((n, c, h, w), layout)
    except ShapeError as e:
        raise FormatError(f"{path}: bad header dims: {e}") from e
    payload = blob[len(VBT_MAGIC) + _VBT_HEADER.size :]
    want_bytes = need * dtype.itemsize
    if len(payload) != want_bytes:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header implies {want_bytes}"
        )
    data = np.frombuffer(payload, dtype=dtype.np_dtype).copy()
    return Tensor((n, c, h, w), dtype, layout, data)
