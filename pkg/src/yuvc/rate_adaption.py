"""Single-model variable-rate control.

A small FC network maps a rate condition (the intra tradeoff scalar, or a
one-hot over the four inter operating points) to per-layer channel-wise
(scale, shift) pairs that modulate every conv in the transform stacks. The
heads are zero-initialized, so a freshly attached adaption net is an exact
identity and reproduces the single-rate model bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

LAMBDA_P_VALUES = (1024, 4096, 16384, 65536)
LAMBDA_I_MIN = 5e-3
LAMBDA_I_MAX = 5e-1

# Intra tradeoff range paired with each inter operating point. Ranges overlap
# by design; see group_for_lambda_i for the deterministic assignment.
LAMBDA_I_GROUPS = (
    (5e-3, 5e-2),
    (1e-2, 1e-1),
    (2e-2, 2e-1),
    (2e-1, 5e-1),
)

INTRA_COND_DIM = 1
INTER_COND_DIM = len(LAMBDA_P_VALUES)


def normalize_lambda_i(lambda_i: float) -> float:
    """Map the intra tradeoff onto [-1, 1] in log space.

    The stream header stores the tradeoff in 32 bits, which can nudge a
    boundary value a few ulps past the nominal range; that rounding slop is
    clamped rather than rejected.
    """
    if not (LAMBDA_I_MIN * (1 - 1e-6) <= lambda_i <= LAMBDA_I_MAX * (1 + 1e-6)):
        raise ValueError(f"lambda_i {lambda_i} outside [{LAMBDA_I_MIN}, {LAMBDA_I_MAX}]")
    lambda_i = min(max(lambda_i, LAMBDA_I_MIN), LAMBDA_I_MAX)
    lo, hi = math.log(LAMBDA_I_MIN), math.log(LAMBDA_I_MAX)
    return 2.0 * (math.log(lambda_i) - lo) / (hi - lo) - 1.0


def intra_condition(lambda_i: float) -> torch.Tensor:
    return torch.tensor([normalize_lambda_i(lambda_i)], dtype=torch.float32)


def inter_condition(lambda_p_index: int) -> torch.Tensor:
    if not 0 <= lambda_p_index < len(LAMBDA_P_VALUES):
        raise ValueError(f"lambda_p index {lambda_p_index} out of range")
    cond = torch.zeros(len(LAMBDA_P_VALUES), dtype=torch.float32)
    cond[lambda_p_index] = 1.0
    return cond


def intra_condition_batch(lambdas: torch.Tensor) -> torch.Tensor:
    """(B,) intra tradeoffs -> (B, 1) normalized conditions."""
    return torch.stack([intra_condition(float(l)) for l in lambdas])


def inter_condition_batch(indices) -> torch.Tensor:
    """(B,) operating-point indices -> (B, 4) one-hot conditions."""
    return torch.stack([inter_condition(int(i)) for i in indices])


def group_for_lambda_i(lambda_i: float) -> int:
    """Inter operating point whose intra range best matches lambda_i.

    The ranges overlap, so ties go to the group whose log-midpoint is
    nearest; outside all ranges the boundary group is returned.
    """
    log_l = math.log(lambda_i)
    best, best_dist = 0, float("inf")
    for k, (lo, hi) in enumerate(LAMBDA_I_GROUPS):
        mid = 0.5 * (math.log(lo) + math.log(hi))
        dist = abs(log_l - mid)
        if dist < best_dist:
            best, best_dist = k, dist
    return best


def sample_lambda_i(rng: np.random.Generator, group: Optional[int] = None) -> float:
    """Draw a tradeoff log-uniformly, from one group's range or the full one."""
    lo, hi = LAMBDA_I_GROUPS[group] if group is not None else (LAMBDA_I_MIN, LAMBDA_I_MAX)
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


class RateAdaptionNet(nn.Module):
    """Condition vector -> per-layer (scale, shift) modulation pairs.

    A shared two-layer trunk feeds one zero-initialized linear head per
    modulation point. Scales are produced in log space (exp applied), so the
    zero init yields scale 1, shift 0 everywhere.
    """

    def __init__(self, cond_dim: int, layer_channels: Sequence[int], hidden: int = 64):
        super().__init__()
        self.cond_dim = cond_dim
        self.layer_channels = list(layer_channels)
        self.trunk = nn.Sequential(
            nn.Linear(cond_dim, hidden), nn.ReLU(inplace=True),
            nn.Linear(hidden, hidden), nn.ReLU(inplace=True),
        )
        self.heads = nn.ModuleList()
        for ch in self.layer_channels:
            head = nn.Linear(hidden, 2 * ch)
            nn.init.zeros_(head.weight)
            nn.init.zeros_(head.bias)
            self.heads.append(head)

    def forward(self, cond: torch.Tensor) -> list[tuple[torch.Tensor, torch.Tensor]]:
        if cond.shape[-1] != self.cond_dim:
            raise ValueError(f"condition dim {cond.shape[-1]} != {self.cond_dim}")
        h = self.trunk(cond)
        mods = []
        for head, ch in zip(self.heads, self.layer_channels):
            out = head(h)
            mods.append((torch.exp(out[..., :ch]), out[..., ch:]))
        return mods


@dataclass
class RateSearchResult:
    lambda_i: float
    bpp: float
    iterations: int
    converged: bool
    history: list[tuple[float, float]]


def search_rate(eval_fn: Callable[[float], float], target_bpp: float,
                lo: float = LAMBDA_I_MIN, hi: float = LAMBDA_I_MAX,
                rel_tol: float = 0.05, max_iters: int = 8) -> RateSearchResult:
    """Bisect the tradeoff in log space until the rate lands near target_bpp.

    Rate grows monotonically with the tradeoff, so plain bisection on
    log(lambda) converges geometrically. Returns the closest point visited if
    the tolerance is never met.
    """
    if target_bpp <= 0:
        raise ValueError("target_bpp must be positive")
    history: list[tuple[float, float]] = []
    best: tuple[float, float] = (math.nan, math.inf)
    log_lo, log_hi = math.log(lo), math.log(hi)
    for it in range(1, max_iters + 1):
        lam = math.exp(0.5 * (log_lo + log_hi))
        bpp = eval_fn(lam)
        history.append((lam, bpp))
        if abs(bpp - target_bpp) < abs(best[1] - target_bpp):
            best = (lam, bpp)
        if abs(bpp - target_bpp) / target_bpp <= rel_tol:
            return RateSearchResult(lam, bpp, it, True, history)
        if bpp > target_bpp:
            log_hi = math.log(lam)
        else:
            log_lo = math.log(lam)
    return RateSearchResult(best[0], best[1], max_iters, False, history)


@dataclass(frozen=True)
class CalibrationPoint:
    """One measured operating point: encode at (lambda_i, lambda_p) gave bpp."""
    lambda_p_index: int
    lambda_i: float
    bpp: float


def mid_lambda_i(group: int) -> float:
    """Geometric midpoint of a group's intra-tradeoff range."""
    lo, hi = LAMBDA_I_GROUPS[group]
    return math.sqrt(lo * hi)


@dataclass
class CalibrationTable:
    """Measured rate brackets per inter operating point for one checkpoint."""
    points: list[CalibrationPoint]

    def __post_init__(self):
        if not self.points:
            raise ValueError("calibration table needs at least one point")
        for p in self.points:
            if not 0 <= p.lambda_p_index < len(LAMBDA_P_VALUES):
                raise ValueError(f"bad operating point index {p.lambda_p_index}")
            if p.bpp <= 0:
                raise ValueError("calibrated bpp must be positive")

    def bracket(self, lambda_p_index: int) -> Optional[tuple[float, float]]:
        bpps = [p.bpp for p in self.points if p.lambda_p_index == lambda_p_index]
        return (min(bpps), max(bpps)) if bpps else None

    def to_dict(self) -> dict:
        return {"points": [{"lambda_p_index": p.lambda_p_index,
                            "lambda_i": p.lambda_i, "bpp": p.bpp}
                           for p in self.points]}

    @classmethod
    def from_dict(cls, doc: dict) -> "CalibrationTable":
        return cls([CalibrationPoint(int(p["lambda_p_index"]),
                                     float(p["lambda_i"]), float(p["bpp"]))
                    for p in doc["points"]])


def select_lambda_pair(target_bpp: float,
                       table: CalibrationTable) -> tuple[float, int]:
    """Pick (initial lambda_i, lambda_p index) whose measured rate bracket
    contains the target.

    The intra tradeoff starts at the geometric middle of the selected group's
    range; the continuous search refines it from there. Targets outside every
    bracket clamp to the nearest endpoint with a warning.
    """
    if target_bpp <= 0:
        raise ValueError("target_bpp must be positive")
    brackets = [(i, table.bracket(i)) for i in range(len(LAMBDA_P_VALUES))]
    brackets = [(i, b) for i, b in brackets if b is not None]
    for i, (lo, hi) in brackets:
        if lo <= target_bpp <= hi:
            return mid_lambda_i(i), i
    # outside or between brackets: nearest by interval distance
    def dist(item):
        _, (lo, hi) = item
        return lo - target_bpp if target_bpp < lo else target_bpp - hi
    i, (lo, hi) = min(brackets, key=dist)
    warnings.warn(
        f"target {target_bpp:.4g} bpp is outside the calibrated range; "
        f"using operating point {LAMBDA_P_VALUES[i]} "
        f"(measured {lo:.4g}..{hi:.4g} bpp)", stacklevel=2)
    return mid_lambda_i(i), i
