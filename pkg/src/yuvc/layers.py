"""Building blocks shared by the transform networks.

Contains plain strided conv/deconv helpers, generalized divisive
normalization, and ``ModSequential``: a sequential container whose conv
outputs can be rescaled channel-wise by an externally supplied list of
(scale, shift) pairs. The rate-adaption network feeds those pairs; when no
pairs are given the container behaves like ``nn.Sequential``.
"""

from __future__ import annotations

from typing import Optional, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F

from .entropy.priors import lower_bound


def conv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel, stride=stride, padding=kernel // 2)


def deconv(in_ch: int, out_ch: int, kernel: int = 5, stride: int = 2) -> nn.ConvTranspose2d:
    return nn.ConvTranspose2d(
        in_ch, out_ch, kernel,
        stride=stride, padding=kernel // 2, output_padding=stride - 1,
    )


class _NonNegative(nn.Module):
    """Reparametrizes a tensor so the effective value stays >= minimum."""

    def __init__(self, minimum: float = 0.0, offset: float = 2 ** -18):
        super().__init__()
        self.pedestal = offset ** 2
        self.bound = (minimum + offset ** 2) ** 0.5

    def init(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sqrt(torch.clamp(x + self.pedestal, min=self.pedestal))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return lower_bound(x, self.bound) ** 2 - self.pedestal


class GDN(nn.Module):
    """Generalized divisive normalization, y_i = x_i / sqrt(b_i + sum_j g_ij x_j^2).

    With ``inverse=True`` the division becomes a multiplication, for use in
    synthesis transforms.
    """

    def __init__(self, channels: int, inverse: bool = False,
                 beta_min: float = 1e-6, gamma_init: float = 0.1):
        super().__init__()
        self.inverse = inverse
        self._beta_param = _NonNegative(minimum=beta_min)
        self._gamma_param = _NonNegative()
        self.beta = nn.Parameter(self._beta_param.init(torch.ones(channels)))
        self.gamma = nn.Parameter(self._gamma_param.init(gamma_init * torch.eye(channels)))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        channels = x.shape[1]
        beta = self._beta_param(self.beta)
        gamma = self._gamma_param(self.gamma).reshape(channels, channels, 1, 1)
        norm = F.conv2d(x * x, gamma, beta)
        norm = torch.sqrt(norm) if self.inverse else torch.rsqrt(norm)
        return x * norm


Modulation = Sequence[tuple[torch.Tensor, torch.Tensor]]


class ModulatedStacks:
    """Mixin for modules whose MOD_STACKS attributes are ModSequential stacks
    sharing one flat list of modulation pairs."""

    MOD_STACKS: tuple[str, ...] = ()

    def mod_layout(self) -> list[int]:
        """Channel widths of every modulation point, in MOD_STACKS order."""
        out: list[int] = []
        for name in self.MOD_STACKS:
            out.extend(getattr(self, name).mod_channels)
        return out

    def _split_mods(self, mods):
        if mods is None:
            return {name: None for name in self.MOD_STACKS}
        split, i = {}, 0
        for name in self.MOD_STACKS:
            n = len(getattr(self, name).mod_channels)
            split[name] = mods[i:i + n]
            i += n
        if i != len(mods):
            raise ValueError(f"expected {i} modulation pairs, got {len(mods)}")
        return split


class ModSequential(nn.Module):
    """Sequential stack with optional channel-wise affine after each conv.

    ``mods`` is consumed in order, one (scale, shift) pair per Conv2d or
    ConvTranspose2d in the stack; other layer types (GDN, activations) pass
    through untouched. ``mod_channels`` lists the width at each modulation
    point so a rate-adaption head can be sized to match.
    """

    _MODULATED = (nn.Conv2d, nn.ConvTranspose2d)

    def __init__(self, *layers: nn.Module):
        super().__init__()
        self.layers = nn.ModuleList(layers)
        self.mod_channels = [
            layer.out_channels for layer in layers if isinstance(layer, self._MODULATED)
        ]

    def forward(self, x: torch.Tensor, mods: Optional[Modulation] = None) -> torch.Tensor:
        if mods is not None and len(mods) != len(self.mod_channels):
            raise ValueError(
                f"expected {len(self.mod_channels)} modulation pairs, got {len(mods)}"
            )
        i = 0
        for layer in self.layers:
            x = layer(x)
            if isinstance(layer, self._MODULATED):
                if mods is not None:
                    # pairs are (C,) shared or (B, C) per-sample
                    scale, shift = mods[i]
                    shape = (-1, x.shape[1], 1, 1)
                    x = x * scale.reshape(shape) + shift.reshape(shape)
                i += 1
        return x
