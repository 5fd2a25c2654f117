"""vecboost: scalar and strip-mined vector kernels for accelerator fallback ops.

Layout shuffles between NCHW and the 32-channel feature-depth order, int8
precision conversion, detection post-processing math, an abstract vector
machine with cycle and cache accounting, and a pipeline latency analyzer.
"""

from .errors import (
    BoundsError,
    ConfigError,
    DispatchError,
    DomainError,
    FormatError,
    MemoryFault,
    ShapeError,
    VecBoostError,
)
from .tensor import (
    CHANNELS_PER_SURFACE,
    Dtype,
    Layout,
    LayoutDims,
    Tensor,
    convert_fd_to_nchw,
    convert_nchw_to_fd,
    fd_offset,
    nchw_offset,
    read_vbt,
    required_size,
    write_vbt,
)
from .kernels import (
    BBox,
    LossParams,
    QuantParams,
    RawPrediction,
    compute_scale,
    decode_box,
    dequantize,
    iou,
    letterbox_preprocess,
    load_ppm,
    nms,
    quantize,
    score_filter,
    upsample_nearest,
    yolo_loss,
)
from .memory import CacheConfig, CacheModel, ZeroLatencyMemory
from .vm import CostTable, VectorMachine, VmConfig, strip_plan
from .vkernels import (
    check_kernel,
    predicted_cycles_fd_to_nchw,
    v_convert_fd_to_nchw,
    v_convert_nchw_to_fd,
    v_dequantize,
    v_normalize,
    v_quantize,
    v_upsample,
)
from .pipeline import (
    apply_remap,
    end_to_end,
    load_layer_table,
    load_remap_rules,
    report,
    total_latency,
)
from .bench import bench_kernel, parse_soc_config

__all__ = [
    "BBox",
    "BoundsError",
    "CacheConfig",
    "CacheModel",
    "CHANNELS_PER_SURFACE",
    "check_kernel",
    "compute_scale",
    "ConfigError",
    "convert_fd_to_nchw",
    "convert_nchw_to_fd",
    "CostTable",
    "decode_box",
    "dequantize",
    "DispatchError",
    "DomainError",
    "Dtype",
    "end_to_end",
    "fd_offset",
    "FormatError",
    "iou",
    "Layout",
    "LayoutDims",
    "letterbox_preprocess",
    "load_layer_table",
    "load_ppm",
    "load_remap_rules",
    "LossParams",
    "MemoryFault",
    "nchw_offset",
    "nms",
    "apply_remap",
    "bench_kernel",
    "parse_soc_config",
    "predicted_cycles_fd_to_nchw",
    "QuantParams",
    "quantize",
    "RawPrediction",
    "read_vbt",
    "report",
    "required_size",
    "score_filter",
    "ShapeError",
    "strip_plan",
    "Tensor",
    "total_latency",
    "upsample_nearest",
    "v_convert_fd_to_nchw",
    "v_convert_nchw_to_fd",
    "v_dequantize",
    "v_normalize",
    "v_quantize",
    "v_upsample",
    "VecBoostError",
    "VectorMachine",
    "VmConfig",
    "write_vbt",
    "yolo_loss",
    "ZeroLatencyMemory",
]

__version__ = "0.1.0"
