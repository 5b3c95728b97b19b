"""Staged training: one optimizer pass per stage over a declared trainable
subset, with frozen-subset hashing, divergence aborts, and EMA loss logs.

Stage kinds:
    intra     I-coder RD loss
    flow      uncoded-warp distortion only (flow-net warmup; no rate term)
    motion    motion path RD loss (flow + coded motion + MC refinement)
    inter     conditional coder RD loss, motion bits included
    joint     same loss as inter (trainable subset usually widens)
    residual  motion path + residual coder RD loss (the baseline)

Any kind can run with ``adapt=True`` to route conditions through the
rate-adaption nets (the variable-rate stages); lambdas are then sampled per
batch element unless pinned.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch

from ..codec import VideoCodec
from ..errors import StageDivergenceError
from ..rate_adaption import (LAMBDA_I_MAX, LAMBDA_I_MIN, LAMBDA_P_VALUES,
                             inter_condition_batch, intra_condition_batch)
from .data import MicroDataset, attach_references
from .losses import distortion, packed_pixels, rd_loss_inter, rd_loss_intra

EMA_SPAN = 100
DIVERGENCE_FACTOR = 10.0

KINDS = ("intra", "flow", "motion", "inter", "joint", "residual")

# name -> attribute path of the submodule whose parameters the name covers
PARAM_GROUPS = {
    "intra": "intra_coder",
    "inter": "inter_coder",
    "flow": "motion.flow_source",
    "motion_coder": "motion.coder",
    "mcnet": "motion.mcnet",
    "residual": "residual_coder",
    "intra_rate": "intra_rate",
    "inter_rate": "inter_rate",
    "motion_rate": "motion_rate",
}


@dataclass
class Stage:
    name: str
    kind: str
    iterations: int
    trainable: tuple[str, ...]
    lr: float = 1e-4
    batch: int = 4
    crop: int = 64
    adapt: bool = False
    lambda_i: Optional[float] = None      # None -> sample per element
    lambda_p_index: Optional[int] = 1     # None -> sample per element

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown stage kind {self.kind!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.crop % 64:
            raise ValueError("crop must be a multiple of 64")
        unknown = set(self.trainable) - set(PARAM_GROUPS)
        if unknown:
            raise ValueError(f"unknown trainable groups {sorted(unknown)}")
        if not self.trainable:
            raise ValueError("stage needs at least one trainable group")


@dataclass
class StageResult:
    name: str
    kind: str
    steps: int
    losses: list[float] = field(default_factory=list)
    ema_start: float = math.nan
    ema_end: float = math.nan
    frozen_ok: bool = True
    metrics: dict = field(default_factory=dict)


def _resolve(codec: VideoCodec, path: str):
    obj = codec
    for part in path.split("."):
        obj = getattr(obj, part)
    return obj


def _group_param_names(codec: VideoCodec, groups: Sequence[str]) -> set[str]:
    prefixes = []
    for g in groups:
        path = PARAM_GROUPS[g]
        if _resolve(codec, path) is None:
            raise ValueError(f"group {g!r} is not present in this codec")
        prefixes.append(path + ".")
    return {name for name, _ in codec.named_parameters()
            if any(name.startswith(p) for p in prefixes)}


def _hash_params(codec: VideoCodec, names: set[str]) -> str:
    digest = hashlib.sha256()
    params = dict(codec.named_parameters())
    for name in sorted(names):
        digest.update(name.encode())
        digest.update(params[name].detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def _sample_lambdas(stage: Stage, rng: np.random.Generator, batch: int):
    """Per-element (lambda_i values, lambda_p indexes, lambda_p values).

    Free draws are stratified across the batch (each element from its own
    quantile bin / operating point), which keeps the batch loss comparable
    step to step; the loss would otherwise swing by the ~64x spread of the
    inter tradeoffs and bury the training signal.
    """
    if stage.lambda_i is not None:
        lam_i = np.full(batch, stage.lambda_i)
    else:
        u = (rng.permutation(batch) + rng.uniform(0.0, 1.0, batch)) / batch
        log_lo, log_hi = np.log(LAMBDA_I_MIN), np.log(LAMBDA_I_MAX)
        lam_i = np.exp(log_lo + u * (log_hi - log_lo))
    if stage.lambda_p_index is not None:
        idx_p = np.full(batch, stage.lambda_p_index, dtype=np.int64)
    else:
        reps = -(-batch // len(LAMBDA_P_VALUES))
        pool = np.concatenate([rng.permutation(len(LAMBDA_P_VALUES))
                               for _ in range(reps)])
        idx_p = pool[:batch].astype(np.int64)
    lam_p = np.array([float(LAMBDA_P_VALUES[i]) for i in idx_p])
    return lam_i, idx_p, lam_p


def _stage_step(codec: VideoCodec, stage: Stage, dataset: MicroDataset,
                rng: np.random.Generator) -> torch.Tensor:
    if stage.kind == "intra":
        x = dataset.sample_frames(rng, stage.batch, stage.crop)
        lam_i, _, _ = _sample_lambdas(stage, rng, stage.batch)
        mods = None
        if stage.adapt:
            mods = codec.intra_rate(intra_condition_batch(torch.from_numpy(lam_i)))
        res = codec.intra_coder.encode(x, mode="train", mods=mods)
        return rd_loss_intra(res.bits, distortion(res.x_hat, x), lam_i,
                             packed_pixels(x))

    ref, cur = dataset.sample_pairs(rng, stage.batch, stage.crop)
    _, idx_p, lam_p = _sample_lambdas(stage, rng, stage.batch)
    pixels = packed_pixels(cur)
    if stage.kind == "flow":
        # rate-free warmup: the joint motion RD loss has a strong local
        # optimum at zero flow / zero bits, so the flow net first learns on
        # raw warp distortion with the coder out of the loop. Each element
        # is normalized by its zero-motion error; pairs with no matchable
        # motion (noise content) then pull toward zero flow instead of
        # drowning the displacement signal, and the logged value reads as
        # the fraction of zero-motion error the warp leaves behind.
        flow = codec.motion.estimate_only(cur, ref)
        _, warped = codec.motion.compensate(ref, flow)
        # the 1e-3 floor keeps already-predictable pairs (static content)
        # from dominating the quotient once the warp perturbs them
        base = distortion(ref, cur).detach() + 1e-3
        return (distortion(warped, cur) / base).mean()
    m_mods = i_mods = None
    if stage.adapt:
        cond = inter_condition_batch(idx_p)
        m_mods = codec.motion_rate(cond)
        i_mods = codec.inter_rate(cond)
    mres = codec.motion.predict(cur, ref, mode="train", mods=m_mods)
    if stage.kind == "motion":
        return rd_loss_inter(mres.bits, distortion(mres.x_tilde, cur), lam_p, pixels)
    if stage.kind in ("inter", "joint"):
        cond_sig = codec.inter_coder.condition(mres.x_tilde)
        res = codec.inter_coder.encode(cur, cond_sig, mode="train", mods=i_mods)
        return rd_loss_inter(mres.bits + res.bits, distortion(res.x_hat, cur),
                             lam_p, pixels)
    # residual baseline
    rres = codec.residual_coder.encode(cur - mres.x_tilde, mode="train")
    x_hat = (mres.x_tilde + rres.v_hat).clamp(0.0, 1.0)
    return rd_loss_inter(mres.bits + rres.bits, distortion(x_hat, cur),
                         lam_p, pixels)


def run_stage(codec: VideoCodec, stage: Stage, dataset: MicroDataset,
              seed: int = 0, reference_lambda_i: float = 0.05) -> StageResult:
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    if stage.kind != "intra":
        attach_references(dataset, codec, reference_lambda_i)

    trainable = _group_param_names(codec, stage.trainable)
    frozen = {n for n, _ in codec.named_parameters()} - trainable
    frozen_before = _hash_params(codec, frozen)

    all_params = dict(codec.named_parameters())
    for name, p in all_params.items():
        p.requires_grad_(name in trainable)
    params = [all_params[n] for n in sorted(trainable)]
    opt = torch.optim.Adam(params, lr=stage.lr)

    result = StageResult(stage.name, stage.kind, stage.iterations)
    codec.train()
    window = max(1, min(EMA_SPAN, stage.iterations // 2))
    alpha = 2.0 / (EMA_SPAN + 1.0)
    ema = None
    try:
        for it in range(stage.iterations):
            opt.zero_grad()
            loss = _stage_step(codec, stage, dataset, rng)
            if not torch.isfinite(loss):
                raise StageDivergenceError(
                    f"stage {stage.name!r}: non-finite loss at step {it}")
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, 1.0)
            opt.step()
            val = loss.detach().item()
            result.losses.append(val)
            ema = val if ema is None else alpha * val + (1 - alpha) * ema
            if it + 1 == window:
                result.ema_start = float(np.mean(result.losses))
            if it + 1 >= window and ema > DIVERGENCE_FACTOR * result.ema_start:
                raise StageDivergenceError(
                    f"stage {stage.name!r}: smoothed loss {ema:.4g} exceeded "
                    f"{DIVERGENCE_FACTOR}x the initial {result.ema_start:.4g} "
                    f"at step {it}")
    finally:
        codec.eval()
        for p in codec.parameters():
            p.requires_grad_(True)
        codec.invalidate_tables()

    # start/end figures are window means, comparable even when per-element
    # tradeoff draws make individual losses span orders of magnitude
    if result.losses:
        result.ema_end = float(np.mean(result.losses[-window:]))
    result.frozen_ok = _hash_params(codec, frozen) == frozen_before
    if not result.frozen_ok:
        raise RuntimeError(f"stage {stage.name!r} modified frozen parameters")
    return result


def run_schedule(codec: VideoCodec, stages: Sequence[Stage], dataset: MicroDataset,
                 seed: int = 0, reference_lambda_i: float = 0.05,
                 checkpoint_dir=None) -> list[StageResult]:
    """Run stages in order; optionally write one checkpoint per stage."""
    from ..codec import save_checkpoint

    results = []
    for i, stage in enumerate(stages):
        result = run_stage(codec, stage, dataset, seed=seed + i,
                           reference_lambda_i=reference_lambda_i)
        results.append(result)
        if checkpoint_dir is not None:
            from pathlib import Path
            path = Path(checkpoint_dir) / f"stage_{i:02d}_{stage.name}.pt"
            save_checkpoint(codec, path, meta={
                "stage": stage.name, "kind": stage.kind, "index": i,
                "ema_start": result.ema_start, "ema_end": result.ema_end,
            })
    return results
