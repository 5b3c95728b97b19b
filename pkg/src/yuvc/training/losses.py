"""Rate-distortion losses.

Both losses are plain means of per-element ``rate + lambda * distortion``
terms, with distortion the (2Y+U+V)/4 weighted MSE. The intra loss measures
distortion in 8-bit units (scaled by 255^2), the inter loss on the [0,1]
scale; this keeps each loss balanced against bits-per-pixel under its own
lambda range, whose magnitudes differ by roughly that factor.
"""

from __future__ import annotations

import torch

from ..frames import weighted_mse

INTRA_DISTORTION_SCALE = 255.0 ** 2


def _per_element(bits: torch.Tensor, mse: torch.Tensor, lam, pixels: int,
                 scale: float) -> torch.Tensor:
    lam = torch.as_tensor(lam, dtype=mse.dtype, device=mse.device)
    return bits / pixels + lam * scale * mse


def rd_loss_intra(bits: torch.Tensor, mse: torch.Tensor, lambda_i,
                  pixels: int) -> torch.Tensor:
    """bits, mse, lambda_i: per batch element; pixels: luma pixels per frame."""
    return _per_element(bits, mse, lambda_i, pixels, INTRA_DISTORTION_SCALE).mean()


def rd_loss_inter(bits: torch.Tensor, mse: torch.Tensor, lambda_p,
                  pixels: int) -> torch.Tensor:
    return _per_element(bits, mse, lambda_p, pixels, 1.0).mean()


def packed_pixels(packed: torch.Tensor) -> int:
    """Luma pixel count of a packed (B,6,h,w) tensor."""
    return 4 * packed.shape[-2] * packed.shape[-1]


def distortion(x_hat: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Per-element weighted MSE between packed tensors."""
    return weighted_mse(x, x_hat)
