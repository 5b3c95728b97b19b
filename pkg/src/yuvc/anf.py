"""Two-step additive-coupling flow codec with a hyperprior.

The codec alternates updates between an image branch and a latent branch:

    z1 = m_enc1(x | c)          # latent update from the image
    x1 = x - mu_dec1(z1)        # image update from the latent
    z2 = z1 + m_enc2(x1 | c)    # second latent update
    h  = m_enc3(z2 | c)         # hyper latent
    z2 is quantized against the mean predicted from round(h)
    x2 = x1 - mu_dec2(dequantized z2)

Only the quantized (z2, h) pair is transmitted. Decoding substitutes the
untransmitted image residue x2 with its prior mean (zeros for intra coding,
the motion-compensated prediction for inter coding) and runs the couplings
in reverse. Because every coupling is additive, the chain is exactly
invertible when quantization is disabled, which is the basis of the
invertibility tests.

In the conditional variant each encoding transform input is concatenated
with features of the prediction, extracted at matching resolution by a
small strided network.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .entropy.priors import (SCALE_MIN, FactorizedPrior, gaussian_bits,
                             lower_bound)
from .layers import GDN, ModSequential, ModulatedStacks, conv, deconv

# Spatial reduction of the main latent, and of the hyper latent on top of it.
MAIN_STRIDE = 8
HYPER_STRIDE = 4


@dataclass(frozen=True)
class AnfConfig:
    """Channel plan for the flow codec.

    n: width of the main coupling transforms
    m: width of the hyper transforms
    k: channels of the main latent z2
    l: channels of the hyper latent h2
    """

    n: int
    m: int
    k: int
    l: int
    conditional: bool = False
    input_channels: int = 6
    cond_width: int = 32
    n_steps: int = 2

    def __post_init__(self):
        if min(self.n, self.m, self.k, self.l, self.input_channels) <= 0:
            raise ValueError("channel counts must be positive")
        if self.n_steps != 2:
            raise ValueError("only the two-step configuration is supported")
        if self.conditional and self.cond_width <= 0:
            raise ValueError("conditional config needs a positive cond_width")

    @classmethod
    def intra(cls) -> "AnfConfig":
        return cls(n=128, m=192, k=320, l=192, conditional=False)

    @classmethod
    def inter(cls) -> "AnfConfig":
        return cls(n=128, m=192, k=128, l=128, conditional=True)

    @classmethod
    def intra_tiny(cls) -> "AnfConfig":
        return cls(n=32, m=32, k=48, l=32, conditional=False, cond_width=16)

    @classmethod
    def inter_tiny(cls) -> "AnfConfig":
        return cls(n=32, m=32, k=32, l=32, conditional=True, cond_width=16)

    def scaled(self, **kwargs) -> "AnfConfig":
        return replace(self, **kwargs)


def quantize(v: torch.Tensor, mean=None, mode: str = "eval") -> torch.Tensor:
    """Center ``v`` on ``mean`` and quantize to the integer grid.

    Modes: ``eval`` rounds; ``noise`` (the training rate surrogate) adds
    Uniform(-1/2, 1/2); ``ste`` rounds forward but passes gradients through.
    """
    centered = v if mean is None else v - mean
    if mode in ("eval", "round"):
        return torch.round(centered)
    if mode in ("noise", "train"):
        return centered + torch.empty_like(centered).uniform_(-0.5, 0.5)
    if mode == "ste":
        return centered + (torch.round(centered) - centered).detach()
    raise ValueError(f"unknown quantize mode {mode!r}")


@dataclass
class ConditioningSignal:
    """Prediction frame plus its feature pyramid for the encoding transforms."""

    x_tilde: torch.Tensor     # (B, 6, H, W)
    full_res: torch.Tensor    # (B, F, H, W)
    latent_res: torch.Tensor  # (B, F, H/8, W/8)


class CondNet(nn.Module):
    """Strided feature extractor matching the two encoding-input resolutions."""

    def __init__(self, in_channels: int, width: int):
        super().__init__()
        self.head = nn.Sequential(
            nn.Conv2d(in_channels, width, 3, padding=1), nn.ReLU(inplace=True),
        )
        self.down = nn.Sequential(
            conv(width, width), nn.ReLU(inplace=True),
            conv(width, width), nn.ReLU(inplace=True),
            conv(width, width),
        )

    def forward(self, x_tilde: torch.Tensor) -> ConditioningSignal:
        full = self.head(x_tilde)
        return ConditioningSignal(x_tilde, full, self.down(full))


def _analysis(in_ch: int, n: int, out_ch: int) -> ModSequential:
    return ModSequential(
        conv(in_ch, n), GDN(n),
        conv(n, n), GDN(n),
        conv(n, out_ch),
    )


def _synthesis(in_ch: int, n: int, out_ch: int) -> ModSequential:
    return ModSequential(
        deconv(in_ch, n), GDN(n, inverse=True),
        deconv(n, n), GDN(n, inverse=True),
        deconv(n, out_ch),
    )


def _hyper_analysis(in_ch: int, m: int, out_ch: int) -> ModSequential:
    return ModSequential(
        nn.Conv2d(in_ch, m, 3, padding=1), GDN(m),
        conv(m, m), GDN(m),
        conv(m, out_ch),
    )


def _hyper_synthesis(in_ch: int, m: int, out_ch: int) -> ModSequential:
    return ModSequential(
        deconv(in_ch, m), GDN(m, inverse=True),
        deconv(m, m), GDN(m, inverse=True),
        nn.Conv2d(m, out_ch, 3, padding=1),
    )


@dataclass
class AnfEncodeResult:
    x_hat: torch.Tensor    # closed-loop reconstruction, clamped to [0, 1]
    x2: torch.Tensor       # untransmitted image-branch residue
    z_hat: torch.Tensor    # mean-centered quantized main latent
    h_hat: torch.Tensor    # quantized hyper latent
    means: torch.Tensor    # Gaussian means for z2 from the hyper decoder
    scales: torch.Tensor   # Gaussian scales for z2 from the hyper decoder
    bits_z: torch.Tensor   # estimated bits per batch element
    bits_h: torch.Tensor

    @property
    def bits(self) -> torch.Tensor:
        return self.bits_z + self.bits_h


class AnfCoder(nn.Module, ModulatedStacks):
    """The flow codec. ``mods`` arguments take rate-adaption modulation as a
    flat list of (scale, shift) pairs covering the six transform stacks in
    ``MOD_STACKS`` order; None disables modulation."""

    MOD_STACKS = ("enc1", "dec1", "enc2", "dec2", "hyper_enc", "hyper_dec")

    def __init__(self, cfg: AnfConfig):
        super().__init__()
        self.cfg = cfg
        cw = cfg.cond_width if cfg.conditional else 0
        self.enc1 = _analysis(cfg.input_channels + cw, cfg.n, cfg.k)
        self.dec1 = _synthesis(cfg.k, cfg.n, cfg.input_channels)
        self.enc2 = _analysis(cfg.input_channels + cw, cfg.n, cfg.k)
        self.dec2 = _synthesis(cfg.k, cfg.n, cfg.input_channels)
        self.hyper_enc = _hyper_analysis(cfg.k + cw, cfg.m, cfg.l)
        self.hyper_dec = _hyper_synthesis(cfg.l, cfg.m, 2 * cfg.k)
        self.prior = FactorizedPrior(cfg.l)
        self.cond_net = CondNet(cfg.input_channels, cfg.cond_width) if cfg.conditional else None

    # -- conditioning --------------------------------------------------------

    def condition(self, x_tilde: torch.Tensor) -> ConditioningSignal:
        if self.cond_net is None:
            raise ValueError("condition() on an unconditional coder")
        return self.cond_net(x_tilde)

    def _check_cond(self, cond: Optional[ConditioningSignal]):
        if self.cfg.conditional and cond is None:
            raise ValueError("conditional coder requires a conditioning signal")
        if not self.cfg.conditional and cond is not None:
            raise ValueError("unconditional coder got a conditioning signal")

    @staticmethod
    def _with_cond(x: torch.Tensor, feat: Optional[torch.Tensor]) -> torch.Tensor:
        return x if feat is None else torch.cat([x, feat], dim=1)

    # -- core passes ---------------------------------------------------------

    def _forward_couplings(self, x, cond, mods):
        c0 = cond.full_res if cond is not None else None
        c3 = cond.latent_res if cond is not None else None
        z1 = self.enc1(self._with_cond(x, c0), mods["enc1"])
        x1 = x - self.dec1(z1, mods["dec1"])
        z2 = z1 + self.enc2(self._with_cond(x1, c0), mods["enc2"])
        h = self.hyper_enc(self._with_cond(z2, c3), mods["hyper_enc"])
        return x1, z2, h

    def _hyper_params(self, h_hat, mods):
        raw = self.hyper_dec(h_hat, mods["hyper_dec"])
        means, scales = raw.chunk(2, dim=1)
        # single clamping point: rate estimation and table indexing must see
        # the same scales or encoder and decoder would disagree
        return means, lower_bound(scales, SCALE_MIN)

    def _inverse_couplings(self, x2, z_bar, cond, mods):
        c0 = cond.full_res if cond is not None else None
        x1 = x2 + self.dec2(z_bar, mods["dec2"])
        z1 = z_bar - self.enc2(self._with_cond(x1, c0), mods["enc2"])
        return x1 + self.dec1(z1, mods["dec1"])

    def _replacement(self, shape_like: torch.Tensor, cond) -> torch.Tensor:
        if self.cfg.conditional:
            return cond.x_tilde
        return torch.zeros_like(shape_like)

    # -- public API ----------------------------------------------------------

    def encode(self, x: torch.Tensor, cond: Optional[ConditioningSignal] = None,
               mode: str = "eval", mods=None) -> AnfEncodeResult:
        """Run the forward flow, quantize, and reconstruct closed-loop.

        ``mode="eval"`` rounds; ``mode="train"`` uses the noise surrogate for
        the rate terms and straight-through rounding on the decode path.
        """
        self._check_cond(cond)
        mods = self._split_mods(mods)
        x1, z2, h = self._forward_couplings(x, cond, mods)
        if mode == "eval":
            h_hat = quantize(h, mode="eval")
            means, scales = self._hyper_params(h_hat, mods)
            z_hat = quantize(z2, means, mode="eval")
            bits_z = gaussian_bits(z_hat, 0.0, scales, per_sample=True)
            bits_h = self.prior.bits(h_hat, per_sample=True)
        elif mode == "train":
            h_hat = quantize(h, mode="ste")
            means, scales = self._hyper_params(h_hat, mods)
            bits_z = gaussian_bits(quantize(z2, means, mode="noise"), 0.0, scales,
                                   per_sample=True)
            bits_h = self.prior.bits(quantize(h, mode="noise"), per_sample=True)
            z_hat = quantize(z2, means, mode="ste")
        else:
            raise ValueError(f"unknown encode mode {mode!r}")
        z_bar = z_hat + means
        x2 = x1 - self.dec2(z_bar, mods["dec2"])
        rep = self._replacement(x2, cond)
        x_hat = self._inverse_couplings(rep, z_bar, cond, mods).clamp(0.0, 1.0)
        return AnfEncodeResult(x_hat, x2, z_hat, h_hat, means, scales, bits_z, bits_h)

    def decode(self, z_hat: torch.Tensor, h_hat: torch.Tensor,
               cond: Optional[ConditioningSignal] = None, mods=None) -> torch.Tensor:
        """Reconstruct from the transmitted latent pair."""
        self._check_cond(cond)
        mods = self._split_mods(mods)
        means, _ = self._hyper_params(h_hat, mods)
        z_bar = z_hat + means
        rep = self._replacement(z_bar.new_zeros(
            (z_bar.shape[0], self.cfg.input_channels,
             z_bar.shape[2] * MAIN_STRIDE, z_bar.shape[3] * MAIN_STRIDE)), cond)
        return self._inverse_couplings(rep, z_bar, cond, mods).clamp(0.0, 1.0)

    def scales_for(self, h_hat: torch.Tensor, mods=None) -> tuple[torch.Tensor, torch.Tensor]:
        """(means, scales) the decoder derives before entropy-decoding z2."""
        return self._hyper_params(h_hat, self._split_mods(mods))

    @torch.no_grad()
    def flow_roundtrip(self, x: torch.Tensor,
                       cond: Optional[ConditioningSignal] = None, mods=None) -> torch.Tensor:
        """Forward then inverse with quantization disabled and the true x2
        carried across; reconstructs x up to float rounding."""
        self._check_cond(cond)
        mods = self._split_mods(mods)
        x1, z2, h = self._forward_couplings(x, cond, mods)
        means, _ = self._hyper_params(h, mods)
        z_res = z2 - means
        z_bar = z_res + means
        x2 = x1 - self.dec2(z_bar, mods["dec2"])
        return self._inverse_couplings(x2, z_bar, cond, mods)
