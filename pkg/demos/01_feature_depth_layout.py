"""Walk through the feature-depth layout on a tensor small enough to eyeball.

The accelerator stores feature maps in 32-channel surfaces: element (i, j, k)
of a C x H x W map lives at

    surface_stride * (i // 32) + line_stride * j + 32 * k + (i % 32)

with line_stride = W * 32 and surface_stride = line_stride * H. Channels past
C in the last surface are padding and stay zero. This script builds a 3 x 2 x 2
map, prints where each element lands, converts it both ways, and shows that
the round trip is exact.

Run:  python3 demos/01_feature_depth_layout.py
"""

import numpy as np

from vecboost import (
    Dtype,
    Layout,
    LayoutDims,
    Tensor,
    convert_fd_to_nchw,
    convert_nchw_to_fd,
    fd_offset,
)

c, h, w = 3, 2, 2
dims = LayoutDims(w=w, h=h, c=c)

print(f"map: {c} channels x {h} rows x {w} cols")
print(f"line_stride    = {dims.line_stride} elements")
print(f"surface_stride = {dims.surface_stride} elements")
print(f"nchw size      = {dims.nchw_size()} elements")
print(f"fd size        = {dims.fd_size()} elements "
      f"({dims.fd_size() - dims.nchw_size()} padding slots)")
print()

# number the elements 0..11 so the scatter is readable
data = np.arange(c * h * w, dtype=np.float32)
nchw = Tensor((1, c, h, w), Dtype.FP32, Layout.NCHW, data)

print("element (channel i, row j, col k) -> fd offset")
for i in range(c):
    for j in range(h):
        for k in range(w):
            print(f"  ({i}, {j}, {k}) value {data[w * h * i + w * j + k]:4.0f}"
                  f"  -> slot {fd_offset(dims, i, j, k)}")

fd = convert_nchw_to_fd(nchw)
print()
print("fd buffer (one surface, 32 channel lanes per column group):")
print(fd.data.reshape(h * w, 32)[:, : c + 2], "  <- lanes 0..%d shown, rest padding" % (c + 1))

back = convert_fd_to_nchw(fd)
print()
print("round trip bit-exact:", back.data.tobytes() == nchw.data.tobytes())

# a channel count that is not a multiple of 32 occupies a partial last surface
dims33 = LayoutDims(w=4, h=4, c=33)
print(f"\nc=33 needs {dims33.fd_size() // dims33.surface_stride} surfaces,"
      f" {dims33.fd_size()} slots for {dims33.nchw_size()} payload elements")
