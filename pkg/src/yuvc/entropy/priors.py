"""Learned priors: factorized density model and conditional Gaussian.

The factorized prior codes the hyper latent; the main latent is coded as
round(z - mean) under a zero-centered Gaussian whose scale comes from the
hyper decoder. Rate estimates use the exact continuous math; the actual
coder snaps scales to a fixed 256-level log grid when building tables.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import torch
import torch.nn as nn

from . import tables
from .tables import TableSet, build_table_set, gaussian_pmf

SCALE_MIN = 0.11
SCALE_MAX = 64.0
SCALE_LEVELS = 256
TAIL_MASS = 1e-9
_LOG2 = math.log(2.0)


class _LowerBoundFn(torch.autograd.Function):
    """max(x, bound) whose gradient still passes when pushing x upward."""

    @staticmethod
    def forward(ctx, x, bound):
        ctx.save_for_backward(x, bound)
        return torch.max(x, bound)

    @staticmethod
    def backward(ctx, grad):
        x, bound = ctx.saved_tensors
        passthrough = (x >= bound) | (grad < 0)
        return grad * passthrough, None


def lower_bound(x: torch.Tensor, bound: float) -> torch.Tensor:
    return _LowerBoundFn.apply(x, torch.tensor(bound, dtype=x.dtype, device=x.device))


def scale_grid() -> np.ndarray:
    return np.geomspace(SCALE_MIN, SCALE_MAX, SCALE_LEVELS)


@functools.lru_cache(maxsize=1)
def gaussian_table_set() -> TableSet:
    """CDF tables for every grid scale (built once per process)."""
    pmfs, offsets = [], []
    for s in scale_grid():
        pmf, off = gaussian_pmf(float(s))
        pmfs.append(pmf)
        offsets.append(off)
    return build_table_set(pmfs, offsets)


def indexes_for_scales(scales: torch.Tensor) -> np.ndarray:
    """Nearest grid scale in log space, as int32 table indexes."""
    s = scales.detach().cpu().numpy().astype(np.float64).ravel()
    s = np.clip(s, SCALE_MIN, SCALE_MAX)
    step = math.log(SCALE_MAX / SCALE_MIN) / (SCALE_LEVELS - 1)
    idx = np.rint(np.log(s / SCALE_MIN) / step)
    return np.clip(idx, 0, SCALE_LEVELS - 1).astype(np.int32)


def gaussian_likelihood(x: torch.Tensor, mean, scale) -> torch.Tensor:
    """P(round to the bin at x) under N(mean, scale), bin width 1."""
    scale = lower_bound(torch.as_tensor(scale, dtype=x.dtype), SCALE_MIN)
    mean = torch.as_tensor(mean, dtype=x.dtype)
    centered = x - mean
    upper = torch.special.ndtr((centered + 0.5) / scale)
    lower = torch.special.ndtr((centered - 0.5) / scale)
    return upper - lower


def bits_from_likelihood(likelihood: torch.Tensor, per_sample: bool = False) -> torch.Tensor:
    nll = -torch.log(likelihood.clamp_min(TAIL_MASS)) / _LOG2
    if per_sample:
        return nll.reshape(nll.shape[0], -1).sum(dim=1)
    return nll.sum()


def gaussian_bits(x: torch.Tensor, mean, scale, per_sample: bool = False) -> torch.Tensor:
    return bits_from_likelihood(gaussian_likelihood(x, mean, scale), per_sample)


class FactorizedPrior(nn.Module):
    """Per-channel monotone CDF model (4 matrix layers, widths 1-3-3-3-1)."""

    filters = (3, 3, 3)

    def __init__(self, channels: int, init_scale: float = 10.0):
        super().__init__()
        self.channels = channels
        dims = (1,) + self.filters + (1,)
        scale = init_scale ** (1.0 / (len(dims) - 1))
        self._matrices = nn.ParameterList()
        self._biases = nn.ParameterList()
        self._factors = nn.ParameterList()
        for k in range(len(dims) - 1):
            init = math.log(math.expm1(1.0 / scale / dims[k + 1]))
            m = nn.Parameter(torch.full((channels, dims[k + 1], dims[k]), init))
            self._matrices.append(m)
            b = nn.Parameter(torch.empty(channels, dims[k + 1], 1).uniform_(-0.5, 0.5))
            self._biases.append(b)
            if k < len(dims) - 2:
                self._factors.append(nn.Parameter(torch.zeros(channels, dims[k + 1], 1)))

    def _logits(self, x: torch.Tensor) -> torch.Tensor:
        # x: (C, 1, N) -> logits of the cumulative at x, shape (C, 1, N)
        for k, matrix in enumerate(self._matrices):
            x = torch.matmul(nn.functional.softplus(matrix), x) + self._biases[k]
            if k < len(self._factors):
                x = x + torch.tanh(self._factors[k]) * torch.tanh(x)
        return x

    def likelihood(self, x: torch.Tensor) -> torch.Tensor:
        """x: (B, C, ...) values on the integer (or noisy) grid."""
        if x.ndim < 2 or x.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, ...) input, got {tuple(x.shape)}")
        shape = x.shape
        v = x.movedim(1, 0).reshape(self.channels, 1, -1)
        lo = self._logits(v - 0.5)
        hi = self._logits(v + 0.5)
        # evaluate on the saturating side for stability
        sign = -torch.sign(lo + hi).detach()
        p = torch.abs(torch.sigmoid(sign * hi) - torch.sigmoid(sign * lo))
        return p.reshape(self.channels, shape[0], *shape[2:]).movedim(0, 1)

    def bits(self, x: torch.Tensor, per_sample: bool = False) -> torch.Tensor:
        return bits_from_likelihood(self.likelihood(x), per_sample)

    @torch.no_grad()
    def cdf_values(self, grid: torch.Tensor) -> torch.Tensor:
        """Cumulative probability per channel at each grid value."""
        v = grid.reshape(1, 1, -1).repeat(self.channels, 1, 1).to(
            next(self.parameters()).dtype
        )
        return torch.sigmoid(self._logits(v))[:, 0, :]

    @torch.no_grad()
    def build_tables(self, max_half_support: int = 512) -> TableSet:
        """Quantized CDF tables, one per channel, from the current weights."""
        half = 8
        while half < max_half_support:
            edges = torch.tensor([-half - 0.5, half + 0.5])
            c = self.cdf_values(edges)
            if float(c[:, 0].max()) < TAIL_MASS and float(c[:, 1].min()) > 1 - TAIL_MASS:
                break
            half *= 2
        grid = torch.arange(-half, half + 1, dtype=torch.float64)
        edges = torch.cat([grid - 0.5, grid[-1:] + 0.5])
        cdf = self.cdf_values(edges).double().cpu().numpy()
        pmfs, offsets = [], []
        for ch in range(self.channels):
            pmf = np.diff(cdf[ch])
            pmf = np.maximum(pmf, 0.0)
            escape = max(1.0 - pmf.sum(), 1e-12)
            pmfs.append(np.concatenate([pmf, [escape]]))
            offsets.append(-half)
        return build_table_set(pmfs, offsets)


def estimate_rate(x: torch.Tensor, prior, mean=None, scale=None,
                  per_sample: bool = False) -> torch.Tensor:
    """Total bits of ``x`` under ``prior`` (a FactorizedPrior or "gaussian")."""
    if isinstance(prior, FactorizedPrior):
        return prior.bits(x, per_sample)
    if prior == "gaussian":
        return gaussian_bits(x, 0.0 if mean is None else mean, scale, per_sample)
    raise TypeError(f"unsupported prior {prior!r}")
