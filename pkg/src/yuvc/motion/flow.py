"""Flow estimation over 4:4:4 inputs.

Three interchangeable sources: a trainable coarse-to-fine pyramid network
(default), a zero-flow stub, and flow maps loaded from file. All expose
``estimate(cur, ref, index)``; only the file-backed source looks at the
frame index.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import TruncatedFileError
from .warp import FLOW_LIMIT, warp

_FLOW_HEADER = struct.Struct("<II")


def _check_pair(cur: torch.Tensor, ref: torch.Tensor):
    if cur.shape != ref.shape:
        raise ValueError(f"frame shapes differ: {tuple(cur.shape)} vs {tuple(ref.shape)}")


class ZeroFlow(nn.Module):
    """Always predicts zero motion."""

    def estimate(self, cur: torch.Tensor, ref: torch.Tensor, index: int = 0) -> torch.Tensor:
        _check_pair(cur, ref)
        b, _, h, w = cur.shape
        return cur.new_zeros((b, 2, h, w))

    forward = estimate


class PyramidFlowNet(nn.Module):
    """Coarse-to-fine flow over a 3-level image pyramid.

    Each level refines the upsampled coarser flow from (cur, warped ref,
    flow) with a 5-conv stack. The last conv of every level starts at zero,
    so the untrained network predicts zero flow everywhere. Each level's
    flow is squashed into +-FLOW_BOUND px: the flow is fed back as an input
    feature of the next level, and an unbounded value there lets training
    amplify a single bad step into a runaway.
    """

    FLOW_BOUND = FLOW_LIMIT

    def __init__(self, levels: int = 3, widths: Sequence[int] = (32, 64, 32, 16),
                 kernel: int = 7):
        super().__init__()
        self.levels = levels
        pad = kernel // 2
        self.refiners = nn.ModuleList()
        for _ in range(levels):
            chans = [8, *widths, 2]
            layers: list[nn.Module] = []
            for cin, cout in zip(chans[:-1], chans[1:]):
                layers.append(nn.Conv2d(cin, cout, kernel, padding=pad))
                layers.append(nn.ReLU(inplace=True))
            layers.pop()  # no activation after the flow output
            nn.init.zeros_(layers[-1].weight)
            nn.init.zeros_(layers[-1].bias)
            self.refiners.append(nn.Sequential(*layers))

    def forward(self, cur: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        _check_pair(cur, ref)
        pyr_cur, pyr_ref = [cur], [ref]
        for _ in range(self.levels - 1):
            pyr_cur.append(F.avg_pool2d(pyr_cur[-1], 2))
            pyr_ref.append(F.avg_pool2d(pyr_ref[-1], 2))
        b, _, h, w = pyr_cur[-1].shape
        flow = cur.new_zeros((b, 2, h, w))
        for level in reversed(range(self.levels)):
            c, r = pyr_cur[level], pyr_ref[level]
            if flow.shape[-1] != c.shape[-1]:
                flow = F.interpolate(flow, size=c.shape[-2:], mode="bilinear",
                                     align_corners=False) * 2.0
            flow = flow + self.refiners[level](torch.cat([c, warp(r, flow), flow], dim=1))
            flow = self.FLOW_BOUND * torch.tanh(flow / self.FLOW_BOUND)
        return flow

    def estimate(self, cur: torch.Tensor, ref: torch.Tensor, index: int = 0) -> torch.Tensor:
        return self(cur, ref)


def write_flow_file(path, flow: np.ndarray):
    """Store one flow map: u32 W, u32 H header, then 2 x H x W float32 LE."""
    flow = np.asarray(flow, dtype="<f4")
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"expected (2, H, W) flow, got {flow.shape}")
    _, h, w = flow.shape
    with open(path, "wb") as f:
        f.write(_FLOW_HEADER.pack(w, h))
        f.write(flow.tobytes())


def read_flow_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _FLOW_HEADER.size:
        raise TruncatedFileError(f"{path}: missing flow header")
    w, h = _FLOW_HEADER.unpack_from(data)
    need = _FLOW_HEADER.size + 2 * h * w * 4
    if len(data) < need:
        raise TruncatedFileError(f"{path}: expected {need} bytes, found {len(data)}")
    return np.frombuffer(data, dtype="<f4", count=2 * h * w,
                         offset=_FLOW_HEADER.size).reshape(2, h, w).copy()


class PrecomputedFlow(nn.Module):
    """Flow maps supplied externally, one file per coded inter frame."""

    def __init__(self, paths: Sequence):
        super().__init__()
        self.paths = [Path(p) for p in paths]

    def estimate(self, cur: torch.Tensor, ref: torch.Tensor, index: int = 0) -> torch.Tensor:
        _check_pair(cur, ref)
        if not 0 <= index < len(self.paths):
            raise IndexError(f"no flow file for frame {index}")
        flow = torch.from_numpy(read_flow_file(self.paths[index]))
        if flow.shape[-2:] != cur.shape[-2:]:
            raise ValueError(
                f"flow file {self.paths[index]} is {tuple(flow.shape[-2:])}, "
                f"frame is {tuple(cur.shape[-2:])}"
            )
        return flow.unsqueeze(0).expand(cur.shape[0], -1, -1, -1).to(cur.dtype)
