"""Backward warping and chroma flow derivation.

The warp is written out as an explicit floor/frac bilinear gather instead of
grid_sample so that zero flow is a bit-exact identity (grid_sample's
normalized coordinates round-trip through floats and are not).
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

# Largest displacement magnitude (luma pixels) the motion path represents.
# The flow estimator squashes its output into this range and the motion
# decoder saturates to it before warping, so no payload can push the warp
# arbitrarily far off-grid.
FLOW_LIMIT = 16.0


def warp(planes: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Sample ``planes`` at positions displaced by ``flow`` (backward warp).

    planes: (B, C, H, W); flow: (B, 2, H, W) with channel 0 = horizontal
    displacement, channel 1 = vertical, in pixels. Out-of-range samples
    replicate the border.
    """
    if planes.shape[0] != flow.shape[0] or planes.shape[2:] != flow.shape[2:]:
        raise ValueError(f"flow {tuple(flow.shape)} does not match planes {tuple(planes.shape)}")
    b, c, h, w = planes.shape
    gy, gx = torch.meshgrid(
        torch.arange(h, dtype=planes.dtype, device=planes.device),
        torch.arange(w, dtype=planes.dtype, device=planes.device),
        indexing="ij",
    )
    sx = gx + flow[:, 0]
    sy = gy + flow[:, 1]
    x0f = torch.floor(sx)
    y0f = torch.floor(sy)
    fx = (sx - x0f).unsqueeze(1)
    fy = (sy - y0f).unsqueeze(1)
    x0 = x0f.long().clamp_(0, w - 1)
    y0 = y0f.long().clamp_(0, h - 1)
    x1 = (x0 + 1).clamp_(max=w - 1)
    y1 = (y0 + 1).clamp_(max=h - 1)

    flat = planes.reshape(b, c, h * w)

    def take(yi, xi):
        idx = (yi * w + xi).reshape(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).reshape(b, c, h, w)

    return ((1 - fy) * ((1 - fx) * take(y0, x0) + fx * take(y0, x1))
            + fy * ((1 - fx) * take(y1, x0) + fx * take(y1, x1)))


def derive_chroma_flow(flow: torch.Tensor) -> torch.Tensor:
    """Luma flow -> half-resolution flow in chroma-pixel units.

    Bilinear x1/2 spatial downsample, then displacement magnitudes halved to
    convert from luma pixels to chroma pixels.
    """
    if flow.shape[-1] % 2 or flow.shape[-2] % 2:
        raise ValueError("flow dimensions must be even")
    down = F.interpolate(flow, scale_factor=0.5, mode="bilinear", align_corners=False)
    return down * 0.5
