"""Desk-scale training data: packed clip tensors and batch samplers.

Clips come from the synthetic generator (or any Frame420 sequences, e.g.
converted natural content). Frames are packed once; batches are aligned
crops sliced straight from the packed tensors. Inter-frame batches pair
each target frame with an I-coded reconstruction of its predecessor, so
P-frame training conditions on what a decoder would actually see.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch

from ..frames import Frame420, pack_frame
from ..synthdata import ClipSpec, generate


@dataclass
class MicroDataset:
    clips: list[torch.Tensor]                      # (T, 6, h, w) packed originals
    references: Optional[list[torch.Tensor]] = None  # same shapes, I-coded recon

    def __post_init__(self):
        if not self.clips:
            raise ValueError("dataset needs at least one clip")

    @property
    def crop_limit(self) -> int:
        """Largest luma crop supported by every clip."""
        return 2 * min(min(c.shape[-2], c.shape[-1]) for c in self.clips)

    def _slice(self, rng: np.random.Generator, crop: int, need_pair: bool):
        ci = int(rng.integers(len(self.clips)))
        clip = self.clips[ci]
        t = int(rng.integers(1 if need_pair else 0, clip.shape[0]))
        c = crop // 2
        y0 = int(rng.integers(clip.shape[-2] - c + 1))
        x0 = int(rng.integers(clip.shape[-1] - c + 1))
        return ci, t, (slice(y0, y0 + c), slice(x0, x0 + c))

    def sample_frames(self, rng: np.random.Generator, batch: int,
                      crop: int) -> torch.Tensor:
        """(B, 6, crop/2, crop/2) batch of random aligned crops."""
        out = []
        for _ in range(batch):
            ci, t, (ys, xs) = self._slice(rng, crop, need_pair=False)
            out.append(self.clips[ci][t, :, ys, xs])
        return torch.stack(out)

    def sample_pairs(self, rng: np.random.Generator, batch: int,
                     crop: int) -> tuple[torch.Tensor, torch.Tensor]:
        """(reference, current) crop batches; reference is the I-coded
        reconstruction of the preceding frame."""
        if self.references is None:
            raise ValueError("dataset has no references; run attach_references first")
        refs, curs = [], []
        for _ in range(batch):
            ci, t, (ys, xs) = self._slice(rng, crop, need_pair=True)
            refs.append(self.references[ci][t - 1, :, ys, xs])
            curs.append(self.clips[ci][t, :, ys, xs])
        return torch.stack(refs), torch.stack(curs)


def pack_clips(clips: Sequence[Sequence[Frame420]]) -> list[torch.Tensor]:
    return [torch.stack([pack_frame(f) for f in clip]) for clip in clips]


def make_micro_dataset(seed: int = 0, n_clips: int = 12, width: int = 64,
                       height: int = 64, frames: int = 6) -> MicroDataset:
    """A mixed bag of synthetic clips, mostly translating (motion training
    needs displacement), with some static, rotating, and noise content."""
    kinds = ["translate", "translate", "translate", "static", "rotate", "noise"]
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n_clips):
        kind = kinds[i % len(kinds)]
        spec = ClipSpec(
            kind=kind, width=width, height=height, frames=frames,
            seed=int(rng.integers(2 ** 31)),
            dx=float(rng.uniform(-2.5, 2.5)), dy=float(rng.uniform(-2.5, 2.5)),
            deg_per_frame=float(rng.uniform(-3.0, 3.0)),
            smoothness=float(rng.uniform(1.5, 4.0)),
        )
        clips.append(generate(spec))
    return MicroDataset(pack_clips(clips))


@torch.no_grad()
def attach_references(dataset: MicroDataset, codec, lambda_i: float) -> None:
    """I-code every frame with the current (frozen) intra coder and store
    the reconstructions as P-frame references."""
    was_training = codec.training
    codec.eval()
    refs = []
    for clip in dataset.clips:
        recon = torch.cat([codec.intra_reconstruct(clip[t:t + 1], lambda_i)
                           for t in range(clip.shape[0])])
        refs.append(recon)
    dataset.references = refs
    if was_training:
        codec.train()
