"""Raw YUV 4:2:0 frame I/O, packing conversions and distortion metrics.

A frame moves between three representations:

* ``Frame420`` -- 8-bit planar storage (full-res Y, half-res U/V).
* packed 6-channel tensor -- ``s2d(Y)`` stacked with U and V at half
  resolution, normalized to [0, 1]; the codec's working format.
* 4:4:4 tensor -- Y plus bilinearly upsampled U/V at full resolution,
  used only for flow estimation.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import TruncatedFileError

# Zero-MSE planes report this instead of +inf so RD curves stay finite.
PSNR_CAP_DB = 100.0


@dataclass
class Frame420:
    """One raw 8-bit YUV 4:2:0 frame."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        h, w = self.y.shape
        if h % 2 or w % 2:
            raise ValueError(f"luma dimensions must be even, got {w}x{h}")
        for name, plane in (("u", self.u), ("v", self.v)):
            if plane.shape != (h // 2, w // 2):
                raise ValueError(
                    f"{name} plane must be {w // 2}x{h // 2}, got shape {plane.shape}"
                )
        for name, plane in (("y", self.y), ("u", self.u), ("v", self.v)):
            if plane.dtype != np.uint8:
                raise ValueError(f"{name} plane must be uint8, got {plane.dtype}")

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    def copy(self) -> "Frame420":
        return Frame420(self.y.copy(), self.u.copy(), self.v.copy())


def frame_nbytes(width: int, height: int) -> int:
    """Byte size of one I420 frame."""
    return width * height * 3 // 2


def load_yuv_sequence(path, width: int, height: int, n_frames: int) -> list[Frame420]:
    """Read ``n_frames`` planar I420 frames from a raw .yuv file.

    Raises:
        ValueError: odd dimensions.
        TruncatedFileError: file ends inside frame ``i`` (index named in the
            message).
    """
    if width % 2 or height % 2:
        raise ValueError(f"frame dimensions must be even, got {width}x{height}")
    per_frame = frame_nbytes(width, height)
    ysize = width * height
    csize = ysize // 4
    frames = []
    with open(path, "rb") as fh:
        for i in range(n_frames):
            buf = fh.read(per_frame)
            if len(buf) < per_frame:
                raise TruncatedFileError(
                    f"{path}: truncated at frame {i} "
                    f"(got {len(buf)} of {per_frame} bytes)"
                )
            raw = np.frombuffer(buf, dtype=np.uint8)
            y = raw[:ysize].reshape(height, width)
            u = raw[ysize : ysize + csize].reshape(height // 2, width // 2)
            v = raw[ysize + csize :].reshape(height // 2, width // 2)
            frames.append(Frame420(y.copy(), u.copy(), v.copy()))
    return frames


def save_yuv_sequence(path, frames: list[Frame420]) -> int:
    """Write frames as planar I420; returns bytes written."""
    total = 0
    with open(path, "wb") as fh:
        for f in frames:
            for plane in (f.y, f.u, f.v):
                buf = np.ascontiguousarray(plane).tobytes()
                fh.write(buf)
                total += len(buf)
    return total


def probe_frame_count(path, width: int, height: int) -> int:
    return os.path.getsize(path) // frame_nbytes(width, height)


def space_to_depth(plane: torch.Tensor) -> torch.Tensor:
    """Rearrange an HxW plane into 4 channels of 2x2-block samples.

    Channel k holds the samples at offset (k // 2, k % 2) of each block.
    """
    h, w = plane.shape[-2], plane.shape[-1]
    if h % 2 or w % 2:
        raise ValueError(f"space_to_depth needs even dims, got {w}x{h}")
    return torch.stack(
        [plane[..., 0::2, 0::2], plane[..., 0::2, 1::2],
         plane[..., 1::2, 0::2], plane[..., 1::2, 1::2]],
        dim=-3,
    )


def depth_to_space(t: torch.Tensor) -> torch.Tensor:
    """Exact inverse of :func:`space_to_depth`."""
    if t.shape[-3] != 4:
        raise ValueError(f"expected 4 channels, got {t.shape[-3]}")
    h2, w2 = t.shape[-2], t.shape[-1]
    out = t.new_empty(t.shape[:-3] + (h2 * 2, w2 * 2))
    out[..., 0::2, 0::2] = t[..., 0, :, :]
    out[..., 0::2, 1::2] = t[..., 1, :, :]
    out[..., 1::2, 0::2] = t[..., 2, :, :]
    out[..., 1::2, 1::2] = t[..., 3, :, :]
    return out


def _to_norm_tensor(plane: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(plane.astype(np.float32) / 255.0)


def pack_frame(frame: Frame420) -> torch.Tensor:
    """Frame420 -> 6x(H/2)x(W/2) packed tensor in [0, 1]."""
    y = _to_norm_tensor(frame.y)
    uv = torch.stack([_to_norm_tensor(frame.u), _to_norm_tensor(frame.v)])
    return torch.cat([space_to_depth(y), uv], dim=0)


def unpack_frame(packed: torch.Tensor) -> Frame420:
    """Packed 6-channel tensor -> Frame420 (rounds to 8-bit)."""
    if packed.dim() != 3 or packed.shape[0] != 6:
        raise ValueError(f"expected 6xhxw tensor, got {tuple(packed.shape)}")

    def to_u8(t: torch.Tensor) -> np.ndarray:
        arr = (t.detach().cpu().numpy() * 255.0).round()
        return np.clip(arr, 0, 255).astype(np.uint8)

    y = depth_to_space(packed[:4])
    return Frame420(to_u8(y), to_u8(packed[4]), to_u8(packed[5]))


def upsample_chroma(plane: torch.Tensor) -> torch.Tensor:
    """Bilinear x2 chroma upsampling with edge replication.

    Output sample j lies at source coordinate (j + 0.5) / 2 - 0.5, i.e. the
    2x2 output block straddles its source sample symmetrically; coordinates
    past the border clamp to the edge sample.
    """
    t = plane[None, None] if plane.dim() == 2 else plane[None]
    out = F.interpolate(t, scale_factor=2, mode="bilinear", align_corners=False)
    return out[0, 0] if plane.dim() == 2 else out[0]


def to_444(frame: Frame420) -> torch.Tensor:
    """Frame420 -> 3xHxW normalized tensor (Y untouched, U/V upsampled x2)."""
    y = _to_norm_tensor(frame.y)
    u = upsample_chroma(_to_norm_tensor(frame.u))
    v = upsample_chroma(_to_norm_tensor(frame.v))
    return torch.stack([y, u, v], dim=0)


def packed_to_444(packed: torch.Tensor) -> torch.Tensor:
    """Batched packed (B,6,h,w) -> (B,3,2h,2w) with chroma upsampled x2."""
    if packed.dim() != 4 or packed.shape[1] != 6:
        raise ValueError(f"expected (B,6,h,w) tensor, got {tuple(packed.shape)}")
    y = depth_to_space(packed[:, :4]).unsqueeze(1)
    uv = F.interpolate(packed[:, 4:6], scale_factor=2, mode="bilinear", align_corners=False)
    return torch.cat([y, uv], dim=1)


def _plane_psnr(ref: np.ndarray, rec: np.ndarray) -> float:
    mse = np.mean((ref.astype(np.float64) - rec.astype(np.float64)) ** 2)
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * math.log10(255.0 ** 2 / mse), PSNR_CAP_DB)


def psnr_planes(ref: Frame420, rec: Frame420) -> tuple[float, float, float]:
    if ref.y.shape != rec.y.shape:
        raise ValueError("frames differ in size")
    return (
        _plane_psnr(ref.y, rec.y),
        _plane_psnr(ref.u, rec.u),
        _plane_psnr(ref.v, rec.v),
    )


def combine_psnr(py: float, pu: float, pv: float) -> float:
    return (6.0 * py + pu + pv) / 8.0


def psnr_yuv(ref: Frame420, rec: Frame420) -> float:
    """Weighted PSNR (6*Y + U + V) / 8 in dB, each plane capped at 100 dB."""
    return combine_psnr(*psnr_planes(ref, rec))


def weighted_mse(ref, rec) -> torch.Tensor:
    """(2*MSE_Y + MSE_U + MSE_V) / 4 over normalized [0, 1] values.

    Accepts a pair of Frame420 (measured in double precision) or a pair of
    packed 6-channel tensors in their own dtype (for the latter, MSE_Y is
    the mean over the four s2d channels, which equals the full-resolution
    Y MSE).
    """
    if isinstance(ref, Frame420) and isinstance(rec, Frame420):
        ref, rec = (torch.cat([
            space_to_depth(torch.from_numpy(f.y.astype(np.float64) / 255.0)),
            torch.from_numpy(f.u.astype(np.float64) / 255.0)[None],
            torch.from_numpy(f.v.astype(np.float64) / 255.0)[None],
        ]) for f in (ref, rec))
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {tuple(ref.shape)} vs {tuple(rec.shape)}")
    if ref.shape[-3] != 6:
        raise ValueError("expected 6-channel packed tensors")
    sq = (ref - rec) ** 2
    mse_y = sq[..., 0:4, :, :].mean(dim=(-3, -2, -1))
    mse_u = sq[..., 4, :, :].mean(dim=(-2, -1))
    mse_v = sq[..., 5, :, :].mean(dim=(-2, -1))
    return (2.0 * mse_y + mse_u + mse_v) / 4.0


def pad_frame(frame: Frame420, multiple: int = 64) -> Frame420:
    """Replicate-pad so both luma dimensions divide ``multiple``."""
    h, w = frame.height, frame.width
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return frame
    y = np.pad(frame.y, ((0, ph), (0, pw)), mode="edge")
    u = np.pad(frame.u, ((0, ph // 2), (0, pw // 2)), mode="edge")
    v = np.pad(frame.v, ((0, ph // 2), (0, pw // 2)), mode="edge")
    return Frame420(y, u, v)


def crop_frame(frame: Frame420, width: int, height: int) -> Frame420:
    """Crop the top-left window (undoes :func:`pad_frame`)."""
    return Frame420(
        frame.y[:height, :width].copy(),
        frame.u[: height // 2, : width // 2].copy(),
        frame.v[: height // 2, : width // 2].copy(),
    )


def padded_size(width: int, height: int, multiple: int = 64) -> tuple[int, int]:
    return (
        ((width + multiple - 1) // multiple) * multiple,
        ((height + multiple - 1) // multiple) * multiple,
    )
