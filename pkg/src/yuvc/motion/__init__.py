from .coder import HyperEncodeResult, HyperpriorCoder, HyperpriorConfig
from .flow import (PrecomputedFlow, PyramidFlowNet, ZeroFlow, read_flow_file,
                   write_flow_file)
from .mcnet import McNet
from .pipeline import MotionModule, MotionResult
from .warp import derive_chroma_flow, warp

__all__ = [
    "HyperEncodeResult", "HyperpriorCoder", "HyperpriorConfig",
    "PrecomputedFlow", "PyramidFlowNet", "ZeroFlow",
    "read_flow_file", "write_flow_file",
    "McNet", "MotionModule", "MotionResult",
    "derive_chroma_flow", "warp",
]
