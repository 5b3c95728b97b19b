"""Motion-compensation refinement.

A two-scale residual U-Net that corrects the warped prediction using the
previous reconstruction and the decoded flow. The output conv starts at
zero, so before training the module passes the warped frame through
unchanged.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1), nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1), nn.ReLU(inplace=True),
    )


class McNet(nn.Module):
    """(warped, reference, flow) -> refined 6-channel prediction in [0, 1].

    All operands live on the half-resolution packed grid; the flow input is
    the chroma-unit field (already half resolution).
    """

    def __init__(self, width: int = 48):
        super().__init__()
        self.enc = _block(6 + 6 + 2, width)
        self.down = nn.Sequential(nn.Conv2d(width, 2 * width, 3, stride=2, padding=1),
                                  nn.ReLU(inplace=True), _block(2 * width, 2 * width))
        self.up = nn.ConvTranspose2d(2 * width, width, 2, stride=2)
        self.dec = _block(2 * width, width)
        self.out = nn.Conv2d(width, 6, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, warped: torch.Tensor, ref: torch.Tensor,
                flow_uv: torch.Tensor) -> torch.Tensor:
        e = self.enc(torch.cat([warped, ref, flow_uv], dim=1))
        d = self.down(e)
        u = self.up(d)
        if u.shape[-2:] != e.shape[-2:]:
            u = F.interpolate(u, size=e.shape[-2:], mode="bilinear", align_corners=False)
        residual = self.out(self.dec(torch.cat([u, e], dim=1)))
        return (warped + residual).clamp(0.0, 1.0)
