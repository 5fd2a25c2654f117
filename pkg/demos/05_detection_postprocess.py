"""Detection post-processing end to end: decode, filter, NMS, and the training loss.

Takes a handful of raw grid-cell predictions, decodes them into normalized
center-format boxes, drops low-objectness ones, runs greedy NMS, and finally
evaluates the three-term squared-error loss against a made-up ground truth.
Also letterboxes a synthetic image to show the resize-and-pad step that feeds
the network.

Run:  python3 demos/05_detection_postprocess.py
"""

import numpy as np

from vecboost import (
    LossParams,
    RawPrediction,
    decode_box,
    iou,
    letterbox_preprocess,
    nms,
    score_filter,
    yolo_loss,
)
from vecboost.kernels import Image

S = 13  # grid cells per side

raw = [
    # two confident predictions in neighboring cells pointing at the same object
    RawPrediction(tx=0.2, ty=0.1, tw=0.4, th=0.3, to=3.0, cell=(6, 6), prior=(0.15, 0.2)),
    RawPrediction(tx=-1.8, ty=0.0, tw=0.5, th=0.25, to=2.2, cell=(7, 6), prior=(0.15, 0.2)),
    # a confident detection elsewhere
    RawPrediction(tx=0.0, ty=-0.3, tw=-0.2, th=0.1, to=2.8, cell=(2, 10), prior=(0.3, 0.25)),
    # noise
    RawPrediction(tx=1.0, ty=1.0, tw=0.0, th=0.0, to=-2.5, cell=(11, 1), prior=(0.1, 0.1)),
]

boxes = [decode_box(p, S) for p in raw]
print("decoded boxes (normalized coordinates):")
for b in boxes:
    print(f"  center ({b.cx:.3f}, {b.cy:.3f}) size {b.bw:.3f}x{b.bh:.3f} "
          f"objectness {b.objectness:.3f}")

kept = score_filter(boxes, 0.5)
print(f"\nscore filter at 0.5 keeps {len(kept)} of {len(boxes)}")
print(f"IoU of the two overlapping candidates: "
      f"{iou(kept[0].corners(), kept[1].corners()):.3f}")

final = nms(kept, iou_threshold=0.45)
print(f"NMS at 0.45 keeps {len(final)}:")
for b in final:
    print(f"  ({b.cx:.3f}, {b.cy:.3f}) obj {b.objectness:.3f}")

# --- loss on a toy 2x2 grid with one responsible slot ---------------------------

params = LossParams(S=2, B=1, obj_mask=(0, 1, 0, 0))
preds = np.array([
    [0.5, 0.5, 0.2, 0.2, 0.1],
    [0.48, 0.52, 0.35, 0.30, 0.9],   # the responsible slot
    [0.5, 0.5, 0.2, 0.2, 0.05],
    [0.5, 0.5, 0.2, 0.2, 0.2],
])
truths = np.array([
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.50, 0.50, 0.30, 0.30, 1.0],
    [0.0, 0.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.0],
])
loss = yolo_loss(preds, truths, params)
print(f"\nloss: coord {loss.coord_loss:.4f} + class {loss.class_loss:.4f} "
      f"+ noobj {loss.noobj_loss:.4f} = {loss.total:.4f}")

# --- letterbox: wide image into a square network input -------------------------

wide = Image(width=64, height=32,
             pixels=np.full((32, 64, 3), 200, dtype=np.uint8))
t = letterbox_preprocess(wide, target=64)
plane = t.data.reshape(3, 64, 64)[0]
pad_rows = int((np.abs(plane - 0.5) < 1e-6).all(axis=1).sum())
print(f"\nletterbox 64x32 -> 64x64: {pad_rows} gray padding rows, "
      f"content rows scaled to [{plane.min():.3f}, {plane.max():.3f}]")
print(f"network input tensor: shape {t.shape}, dtype {t.dtype.name}, "
      f"layout {t.layout.name}")
