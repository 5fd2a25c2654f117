"""Scalar reference kernels: precision conversion, CNN primitives used as
oracles, detection post-processing math, and the image pre-processing path.

These are the bit-exact references the vector programs in `vkernels` are
checked against, plus everything the pipeline keeps on the host: quantize /
dequantize, upsample, YOLO box decode, IoU, NMS, the three-term loss, and
letterbox pre-processing over binary PPM images.

Numeric contracts worth calling out:

* quantize divides in float32 (scale is cast down first) and rounds half
  away from zero; numpy's round() is half-to-even and must not be used.
* normalization divides by 255.0 rather than multiplying by a reciprocal,
  so 255 maps to exactly 1.0.

All functions are pure; nothing here holds state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import BoundsError, DomainError, FormatError, ShapeError
from .tensor import Dtype, Layout, Tensor


# ---------------------------------------------------------------------------
# quantization

@dataclass(frozen=True)
class QuantParams:
    """Symmetric per-tensor int8 quantization: q = round(x / scale)."""

    scale: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise DomainError(f"scale must be finite and > 0, got {self.scale!r}")


def quantize_elements(x: np.ndarray, scale: float) -> np.ndarray:
    """Elementwise int8 quantization shared by the scalar and vector paths.

    The scale is cast to float32 so the division happens at matched
    precision; rounding is half away from zero, then clamp to [-128, 127].
    """
    y = np.asarray(x, dtype=np.float32) / np.float32(scale)
    r = np.copysign(np.floor(np.abs(y) + np.float32(0.5)), y)
    return np.clip(r, -128, 127).astype(np.int8)


def dequantize_elements(q: np.ndarray, scale: float) -> np.ndarray:
    return np.asarray(q, dtype=np.float32) * np.float32(scale)


def normalize_elements(u8: np.ndarray, divisor: float = 255.0) -> np.ndarray:
    """u8 -> f32 in [0,1]. Division keeps 255/255 exactly 1.0."""
    return np.asarray(u8, dtype=np.float32) / np.float32(divisor)


def _require(t: Tensor, dtype: Dtype | None = None, layout: Layout | None = None) -> None:
    if dtype is not None and t.dtype is not dtype:
        raise ShapeError(f"expected {dtype.value} tensor, got {t.dtype.value}")
    if layout is not None and t.layout is not layout:
        raise ShapeError(f"expected {layout.value} layout, got {t.layout.value}")


def quantize(t: Tensor, q: QuantParams) -> Tensor:
    _require(t, dtype=Dtype.FP32)
    if not np.isfinite(t.data).all():
        raise DomainError("quantize input contains non-finite elements")
    return Tensor(t.shape, Dtype.INT8, t.layout, quantize_elements(t.data, q.scale))


def dequantize(t: Tensor, q: QuantParams) -> Tensor:
    _require(t, dtype=Dtype.INT8)
    return Tensor(t.shape, Dtype.FP32, t.layout, dequantize_elements(t.data, q.scale))


def compute_scale(t: Tensor | np.ndarray) -> QuantParams:
    """scale = max|x| / 127, or 1.0 for an all-zero input."""
    x = t.data if isinstance(t, Tensor) else np.asarray(t, dtype=np.float32)
    if x.size == 0:
        raise DomainError("cannot compute a scale from an empty tensor")
    if not np.isfinite(x).all():
        raise DomainError("scale input contains non-finite elements")
    m = float(np.max(np.abs(x)))
    return QuantParams(scale=m / 127.0 if m > 0 else 1.0)


# ---------------------------------------------------------------------------
# CNN primitives (correctness oracles for the fallback ops)

def relu(t: Tensor) -> Tensor:
    _require(t, dtype=Dtype.FP32)
    return Tensor(t.shape, t.dtype, t.layout, np.maximum(t.data, np.float32(0.0)))


def maxpool2x2(t: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; height and width must be even."""
    _require(t, dtype=Dtype.FP32, layout=Layout.NCHW)
    n, c, h, w = t.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2x2 needs even h and w, got {h}x{w}")
    a = t.data.reshape(n, c, h // 2, 2, w // 2, 2)
    out = a.max(axis=(3, 5))
    return Tensor((n, c, h // 2, w // 2), t.dtype, t.layout, out.ravel())


def upsample_nearest(t: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor upsample: out[c, j, k] = in[c, j // factor, k // factor]."""
    _require(t, layout=Layout.NCHW)
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise DomainError(f"factor must be a positive integer, got {factor!r}")
    n, c, h, w = t.shape
    a = t.data.reshape(n, c, h, w)
    out = np.repeat(np.repeat(a, factor, axis=2), factor, axis=3)
    return Tensor((n, c, h * factor, w * factor), t.dtype, t.layout, out.ravel())


def conv2d_ref(t: Tensor, kernel: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D true convolution (kernel flipped, unlike cross-correlation).

    (I*K)(x, y) = sum_ij I(x-i, y-j) K(i, j), evaluated per (batch, channel)
    plane with zero padding. `kernel` must be a (1, 1, kh, kw) fp32 tensor.
    """
    _require(t, dtype=Dtype.FP32, layout=Layout.NCHW)
    _require(kernel, dtype=Dtype.FP32, layout=Layout.NCHW)
    if not isinstance(stride, (int, np.integer)) or stride < 1:
        raise DomainError(f"stride must be a positive integer, got {stride!r}")
    if not isinstance(padding, (int, np.integer)) or padding < 0:
        raise DomainError(f"padding must be >= 0, got {padding!r}")
    kn, kc, kh, kw = kernel.shape
    if kn != 1 or kc != 1:
        raise ShapeError(f"kernel must have shape (1, 1, kh, kw), got {kernel.shape}")
    n, c, h, w = t.shape
    ph, pw = h + 2 * padding, w + 2 * padding
    if kh > ph or kw > pw:
        raise ShapeError(f"kernel {kh}x{kw} does not fit padded input {ph}x{pw}")
    oh = (ph - kh) // stride + 1
    ow = (pw - kw) // stride + 1
    a = t.data.reshape(n, c, h, w)
    padded = np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kf = kernel.data.reshape(kh, kw)[::-1, ::-1]
    out = np.zeros((n, c, oh, ow), np.float32)
    for a_ in range(kh):
        for b_ in range(kw):
            win = padded[:, :, a_ : a_ + (oh - 1) * stride + 1 : stride,
                         b_ : b_ + (ow - 1) * stride + 1 : stride]
            out += kf[a_, b_] * win
    return Tensor((n, c, oh, ow), Dtype.FP32, Layout.NCHW, out.ravel())


# ---------------------------------------------------------------------------
# detection post-processing

@dataclass(frozen=True)
class BBox:
    """Center-format box with an objectness score and optional class scores."""

    cx: float
    cy: float
    bw: float
    bh: float
    objectness: float
    class_scores: tuple = ()

    def __post_init__(self) -> None:
        if self.bw < 0 or self.bh < 0:
            raise DomainError(f"box extents must be >= 0, got {self.bw}x{self.bh}")
        if not 0.0 <= self.objectness <= 1.0:
            raise DomainError(f"objectness must be in [0,1], got {self.objectness}")

    def corners(self) -> tuple[float, float, float, float]:
        return (
            self.cx - self.bw / 2.0,
            self.cy - self.bh / 2.0,
            self.cx + self.bw / 2.0,
            self.cy + self.bh / 2.0,
        )


@dataclass(frozen=True)
class RawPrediction:
    """One raw network output slot before decoding."""

    tx: float
    ty: float
    tw: float
    th: float
    to: float
    cell: tuple[int, int]
    prior: tuple[float, float]


def _sigmoid(x: float) -> float:
    # split on sign to avoid exp overflow for large |x|
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def decode_box(p: RawPrediction, grid_size: int) -> BBox:
    """cx=(sig(tx)+cx_idx)/S, cy likewise; bw=pw*e^tw, bh=ph*e^th; obj=sig(to)."""
    if grid_size < 1:
        raise DomainError(f"grid size must be >= 1, got {grid_size}")
    cx_idx, cy_idx = p.cell
    if not (0 <= cx_idx < grid_size and 0 <= cy_idx < grid_size):
        raise BoundsError(f"cell {p.cell} outside grid of size {grid_size}")
    pw, ph = p.prior
    if pw <= 0 or ph <= 0:
        raise DomainError(f"anchor dims must be > 0, got {p.prior}")
    return BBox(
        cx=(_sigmoid(p.tx) + cx_idx) / grid_size,
        cy=(_sigmoid(p.ty) + cy_idx) / grid_size,
        bw=pw * math.exp(p.tw),
        bh=ph * math.exp(p.th),
        objectness=_sigmoid(p.to),
    )


def iou(a: tuple, b: tuple) -> float:
    """Intersection over union of two corner boxes (x1, y1, x2, y2)."""
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    if ax1 > ax2 or ay1 > ay2 or bx1 > bx2 or by1 > by2:
        raise DomainError(f"inverted box: {a} / {b}")
    iw = max(0.0, min(ax2, bx2) - max(ax1, bx1))
    ih = max(0.0, min(ay2, by2) - max(ay1, by1))
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union == 0.0:
        return 0.0
    return inter / union


def score_filter(boxes: Sequence[BBox], min_objectness: float) -> list[BBox]:
    """Pre-filter applied before NMS: drop boxes scoring below the threshold."""
    return [b for b in boxes if b.objectness >= min_objectness]


def nms(boxes: Sequence[BBox], iou_threshold: float) -> list[BBox]:
    """Greedy NMS: repeatedly keep the highest-objectness box and discard
    remaining boxes whose IoU with it exceeds the threshold (strictly).

    Ties in objectness are broken by original index, ascending. Kept boxes
    come back in selection order.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise DomainError(f"iou threshold must be in [0,1], got {iou_threshold}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].objectness, i))
    kept: list[BBox] = []
    alive = [True] * len(boxes)
    for idx in order:
        if not alive[idx]:
            continue
        top = boxes[idx]
        kept.append(top)
        alive[idx] = False
        for j in order:
            if alive[j] and iou(boxes[j].corners(), top.corners()) > iou_threshold:
                alive[j] = False
    return kept


@dataclass(frozen=True)
class LossParams:
    """Coefficients and the responsibility mask for the three-term loss."""

    S: int
    B: int
    obj_mask: tuple
    lambda_coord: float = 5.0
    lambda_noobj: float = 0.5

    def __post_init__(self) -> None:
        if self.S < 1 or self.B < 1:
            raise DomainError(f"S and B must be >= 1, got S={self.S}, B={self.B}")
        if self.lambda_coord < 0 or self.lambda_noobj < 0:
            raise DomainError("loss coefficients must be >= 0")
        mask = tuple(int(m) for m in self.obj_mask)
        if len(mask) != self.S * self.S * self.B:
            raise ShapeError(
                f"obj_mask has {len(mask)} entries, expected S*S*B = {self.S * self.S * self.B}"
            )
        if any(m not in (0, 1) for m in mask):
            raise DomainError("obj_mask entries must be 0 or 1")
        object.__setattr__(self, "obj_mask", mask)


class LossBreakdown(NamedTuple):
    coord_loss: float
    class_loss: float
    noobj_loss: float
    total: float


def yolo_loss(preds, truths, params: LossParams) -> LossBreakdown:
    """Three-term squared-error loss over S*S*B slots of (x, y, w, h, C).

    coord: lambda_coord * sum_obj [(x-x^)^2 + (y-y^)^2]
         + lambda_coord * sum_obj [(sqrt(w)-sqrt(w^))^2 + (sqrt(h)-sqrt(h^))^2]
    class: sum_obj (C-C^)^2
    noobj: lambda_noobj * sum_noobj (C-C^)^2
    """
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    want = (params.S * params.S * params.B, 5)
    if p.shape != want or t.shape != want:
        raise ShapeError(f"preds/truths must have shape {want}, got {p.shape}/{t.shape}")
    if (p[:, 2:4] < 0).any() or (t[:, 2:4] < 0).any():
        raise DomainError("negative box width/height; square roots are taken")
    mask = np.asarray(params.obj_mask, dtype=bool)
    po, to = p[mask], t[mask]
    pn, tn = p[~mask], t[~mask]
    coord = params.lambda_coord * float(
        np.sum((po[:, 0] - to[:, 0]) ** 2 + (po[:, 1] - to[:, 1]) ** 2)
    )
    coord += params.lambda_coord * float(
        np.sum(
            (np.sqrt(po[:, 2]) - np.sqrt(to[:, 2])) ** 2
            + (np.sqrt(po[:, 3]) - np.sqrt(to[:, 3])) ** 2
        )
    )
    cls = float(np.sum((po[:, 4] - to[:, 4]) ** 2))
    noobj = params.lambda_noobj * float(np.sum((pn[:, 4] - tn[:, 4]) ** 2))
    return LossBreakdown(coord, cls, noobj, coord + cls + noobj)


# ---------------------------------------------------------------------------
# images: PPM io and letterbox pre-processing

@dataclass
class Image:
    """8-bit RGB image, row-major interleaved."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ShapeError(
                f"pixel block {px.shape} does not match {self.height}x{self.width}x3"
            )
        self.pixels = np.ascontiguousarray(px)

    @property
    def channels(self) -> int:
        return 3


def _ppm_tokens(blob: bytes, count: int, start: int) -> tuple[list[int], int]:
    """Read `count` whitespace-separated ints, honoring '#' comments."""
    tokens: list[int] = []
    i = start
    n = len(blob)
    while len(tokens) < count:
        while i < n and blob[i : i + 1].isspace():
            i += 1
        if i < n and blob[i] == ord("#"):
            while i < n and blob[i] != ord("\n"):
                i += 1
            continue
        j = i
        while j < n and not blob[j : j + 1].isspace():
            j += 1
        if j == i:
            raise FormatError("PPM header truncated")
        try:
            tokens.append(int(blob[i:j]))
        except ValueError as e:
            raise FormatError(f"bad PPM header token {blob[i:j]!r}") from e
        i = j
    return tokens, i


def load_ppm(path) -> Image:
    """Read a binary PPM (P6, maxval 255)."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (magic {blob[:2]!r})")
    try:
        (w, h, maxval), pos = _ppm_tokens(blob, 3, 2)
    except FormatError as e:
        raise FormatError(f"{path}: {e}") from e
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    if w < 1 or h < 1:
        raise FormatError(f"{path}: bad dimensions {w}x{h}")
    pos += 1  # single whitespace byte after the header
    payload = blob[pos:]
    need = w * h * 3
    if len(payload) != need:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {need}")
    px = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()
    return Image(width=w, height=h, pixels=px)


def write_ppm(path, img: Image) -> None:
    with open(path, "wb") as f:
        f.write(f"P6\n{img.width} {img.height}\n255\n".encode("ascii"))
        f.write(img.pixels.tobytes())


def image_to_planar_f32(img: Image) -> np.ndarray:
    """Letterbox stage 1: interleaved u8 -> planar CHW f32 in [0,1]."""
    return normalize_elements(img.pixels.transpose(2, 0, 1))


def _resize_bilinear(planes: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with src = (dst+0.5)*(in/out) - 0.5, edge clamp.

    Computed in float64; caller casts back down.
    """
    _, in_h, in_w = planes.shape
    planes = planes.astype(np.float64)

    def coords(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        lo = np.floor(src)
        t = src - lo
        i0 = np.clip(lo, 0, n_in - 1).astype(np.int64)
        i1 = np.clip(lo + 1, 0, n_in - 1).astype(np.int64)
        return i0, i1, t

    y0, y1, ty = coords(in_h, out_h)
    x0, x1, tx = coords(in_w, out_w)
    rows = planes[:, y0, :] * (1.0 - ty)[None, :, None] + planes[:, y1, :] * ty[None, :, None]
    out = rows[:, :, x0] * (1.0 - tx)[None, None, :] + rows[:, :, x1] * tx[None, None, :]
    return out


def letterbox_preprocess(img: Image, target: int) -> Tensor:
    """Normalize, aspect-preserving bilinear resize, center in a 0.5 canvas.

    Returns a (1, 3, target, target) NCHW fp32 tensor with values in [0,1].
    """
    if not isinstance(target, (int, np.integer)) or target < 1:
        raise DomainError(f"target size must be a positive integer, got {target!r}")
    planar = image_to_planar_f32(img)
    longer = max(img.width, img.height)
    new_w = max(1, int(math.floor(target * img.width / longer + 0.5)))
    new_h = max(1, int(math.floor(target * img.height / longer + 0.5)))
    resized = _resize_bilinear(planar, new_h, new_w)
    resized = np.clip(resized, 0.0, 1.0).astype(np.float32)
    canvas = np.full((3, target, target), np.float32(0.5), np.float32)
    top = (target - new_h) // 2
    left = (target - new_w) // 2
    canvas[:, top : top + new_h, left : left + new_w] = resized
    return Tensor((1, 3, target, target), Dtype.FP32, Layout.NCHW, canvas.ravel())
