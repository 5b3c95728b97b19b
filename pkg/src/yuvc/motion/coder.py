"""Hyperprior autoencoder used for flow fields and for the residual baseline.

Four strided convs each way (x16), a factorized prior on the hyper latent,
and a conditional Gaussian on the main latent with mean and scale from the
hyper decoder. Modulation hooks mirror the flow codec's.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..entropy.priors import (SCALE_MIN, FactorizedPrior, gaussian_bits,
                              lower_bound)
from ..layers import GDN, ModSequential, ModulatedStacks, conv, deconv
from ..anf import quantize


@dataclass(frozen=True)
class HyperpriorConfig:
    in_channels: int
    n: int = 128   # transform width
    m: int = 128   # hyper width
    k: int = 128   # main latent channels
    l: int = 128   # hyper latent channels
    depth: int = 4  # strided conv count; total analysis stride is 2**depth

    def __post_init__(self):
        if self.depth < 2:
            raise ValueError("depth must be at least 2")

    @property
    def stride(self) -> int:
        return 2 ** self.depth

    @classmethod
    def motion(cls) -> "HyperpriorConfig":
        return cls(in_channels=2)

    @classmethod
    def motion_tiny(cls) -> "HyperpriorConfig":
        return cls(in_channels=2, n=32, m=32, k=32, l=32)

    @classmethod
    def residual(cls) -> "HyperpriorConfig":
        # operates on the half-resolution packed grid, hence one less stride
        return cls(in_channels=6, n=192, m=192, k=192, l=192, depth=3)


@dataclass
class HyperEncodeResult:
    v_hat: torch.Tensor   # closed-loop reconstruction
    y_hat: torch.Tensor   # mean-centered quantized main latent
    h_hat: torch.Tensor   # quantized hyper latent
    means: torch.Tensor
    scales: torch.Tensor
    bits_y: torch.Tensor  # estimated bits per batch element
    bits_h: torch.Tensor

    @property
    def bits(self) -> torch.Tensor:
        return self.bits_y + self.bits_h


class HyperpriorCoder(nn.Module, ModulatedStacks):
    MOD_STACKS = ("analysis", "synthesis", "hyper_enc", "hyper_dec")

    def __init__(self, cfg: HyperpriorConfig):
        super().__init__()
        self.cfg = cfg
        n, m, k, l = cfg.n, cfg.m, cfg.k, cfg.l
        ana: list[nn.Module] = []
        syn: list[nn.Module] = []
        for i in range(cfg.depth - 1):
            ana += [conv(cfg.in_channels if i == 0 else n, n), GDN(n)]
            syn += [deconv(k if i == 0 else n, n), GDN(n, inverse=True)]
        ana.append(conv(n, k))
        syn.append(deconv(n, cfg.in_channels))
        self.analysis = ModSequential(*ana)
        self.synthesis = ModSequential(*syn)
        self.hyper_enc = ModSequential(
            nn.Conv2d(k, m, 3, padding=1), nn.ReLU(inplace=True),
            conv(m, m), nn.ReLU(inplace=True),
            conv(m, l),
        )
        self.hyper_dec = ModSequential(
            deconv(l, m), nn.ReLU(inplace=True),
            deconv(m, m), nn.ReLU(inplace=True),
            nn.Conv2d(m, 2 * k, 3, padding=1),
        )
        self.prior = FactorizedPrior(l)

    def _hyper_params(self, h_hat, mods):
        means, scales = self.hyper_dec(h_hat, mods["hyper_dec"]).chunk(2, dim=1)
        # clamp once here so rate estimates and table indexes always agree
        return means, lower_bound(scales, SCALE_MIN)

    def encode(self, v: torch.Tensor, mode: str = "eval", mods=None) -> HyperEncodeResult:
        mods = self._split_mods(mods)
        y = self.analysis(v, mods["analysis"])
        h = self.hyper_enc(y, mods["hyper_enc"])
        if mode == "eval":
            h_hat = quantize(h, mode="eval")
            means, scales = self._hyper_params(h_hat, mods)
            y_hat = quantize(y, means, mode="eval")
            bits_y = gaussian_bits(y_hat, 0.0, scales, per_sample=True)
            bits_h = self.prior.bits(h_hat, per_sample=True)
        elif mode == "train":
            h_hat = quantize(h, mode="ste")
            means, scales = self._hyper_params(h_hat, mods)
            bits_y = gaussian_bits(quantize(y, means, mode="noise"), 0.0, scales,
                                   per_sample=True)
            bits_h = self.prior.bits(quantize(h, mode="noise"), per_sample=True)
            y_hat = quantize(y, means, mode="ste")
        else:
            raise ValueError(f"unknown encode mode {mode!r}")
        v_hat = self.synthesis(y_hat + means, mods["synthesis"])
        return HyperEncodeResult(v_hat, y_hat, h_hat, means, scales, bits_y, bits_h)

    def decode(self, y_hat: torch.Tensor, h_hat: torch.Tensor, mods=None) -> torch.Tensor:
        mods = self._split_mods(mods)
        means, _ = self._hyper_params(h_hat, mods)
        return self.synthesis(y_hat + means, mods["synthesis"])

    def scales_for(self, h_hat: torch.Tensor, mods=None) -> tuple[torch.Tensor, torch.Tensor]:
        return self._hyper_params(h_hat, self._split_mods(mods))
