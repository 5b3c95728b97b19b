"""The full motion path: estimate, code, derive chroma flow, warp, refine.

Everything after flow decoding (``compensate``) runs identically on the
encoder and decoder sides, which is what makes the inter-frame closed loop
bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..frames import depth_to_space, packed_to_444, space_to_depth
from .coder import HyperEncodeResult, HyperpriorCoder
from .mcnet import McNet
from .warp import FLOW_LIMIT, derive_chroma_flow, warp


@dataclass
class MotionResult:
    x_tilde: torch.Tensor    # refined 6-channel prediction
    warped: torch.Tensor     # warp-only prediction (pre MC-Net)
    flow_hat: torch.Tensor   # decoded luma flow
    coded: HyperEncodeResult

    @property
    def bits(self) -> torch.Tensor:
        return self.coded.bits


class MotionModule(nn.Module):
    def __init__(self, coder: HyperpriorCoder, flow_source: nn.Module, mcnet: McNet):
        super().__init__()
        self.coder = coder
        self.flow_source = flow_source
        self.mcnet = mcnet

    def compensate(self, ref: torch.Tensor, flow_hat: torch.Tensor
                   ) -> tuple[torch.Tensor, torch.Tensor]:
        """Decoded flow + previous reconstruction -> (x_tilde, warped).

        The flow saturates at +-FLOW_LIMIT here, on both codec sides: the
        estimator never produces more, so anything beyond it is coder
        garbage (or a hostile payload) that must not reach the warp.
        """
        flow_hat = flow_hat.clamp(-FLOW_LIMIT, FLOW_LIMIT)
        flow_uv = derive_chroma_flow(flow_hat)
        ref_y = depth_to_space(ref[:, :4]).unsqueeze(1)
        warped_y = warp(ref_y, flow_hat)
        warped_uv = warp(ref[:, 4:6], flow_uv)
        warped = torch.cat([space_to_depth(warped_y[:, 0]), warped_uv], dim=1)
        return self.mcnet(warped, ref, flow_uv), warped

    def predict(self, cur: torch.Tensor, ref: torch.Tensor, mode: str = "eval",
                mods=None, frame_index: int = 0) -> MotionResult:
        """Encoder-side pass over packed 6-channel tensors.

        The coder transports flow divided by FLOW_LIMIT: its GDN stacks are
        tuned for roughly unit-range inputs (images), and feeding them raw
        multi-pixel displacements makes training walk off a cliff.
        """
        flow = self.flow_source.estimate(packed_to_444(cur), packed_to_444(ref),
                                         frame_index)
        coded = self.coder.encode(flow / FLOW_LIMIT, mode=mode, mods=mods)
        flow_hat = coded.v_hat * FLOW_LIMIT
        x_tilde, warped = self.compensate(ref, flow_hat)
        return MotionResult(x_tilde, warped, flow_hat, coded)

    def decode_flow(self, y_hat: torch.Tensor, h_hat: torch.Tensor,
                    mods=None) -> torch.Tensor:
        """Decoder-side counterpart of the scaling in ``predict``."""
        return self.coder.decode(y_hat, h_hat, mods=mods) * FLOW_LIMIT

    def estimate_only(self, cur: torch.Tensor, ref: torch.Tensor,
                      frame_index: int = 0) -> torch.Tensor:
        """Raw (uncoded) flow between packed frames, for motion pre-training."""
        return self.flow_source.estimate(packed_to_444(cur), packed_to_444(ref),
                                         frame_index)
