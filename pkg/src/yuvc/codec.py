"""GOP orchestration: I/P frame coding, the residual baseline, and
bitstream assembly/decoding.

All frame-level methods work on padded, packed 6-channel tensors with batch
size 1; ``encode_sequence``/``decode_sequence`` handle padding, packing, and
the GOP schedule. Every reconstruction returned by an encode call is
produced by the same arithmetic the decoder runs, so encoder-side and
decoder-side reconstructions match bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn as nn

from .anf import AnfCoder, AnfConfig
from .bitstream import (FRAME_INTER, FRAME_INTRA, FRAME_RESIDUAL,
                        MODE_CONDITIONAL, MODE_RESIDUAL, EncodedFrame,
                        SequenceBitstream, SequenceHeader)
from .entropy.chunks import BitChunk, decode_chunk, encode_chunk
from .entropy.priors import gaussian_table_set, indexes_for_scales
from .entropy.tables import TableSet
from .errors import BitstreamError, ChecksumMismatchError
from .frames import (Frame420, crop_frame, pack_frame, pad_frame, padded_size,
                     psnr_yuv, unpack_frame)
from .motion.coder import HyperpriorCoder, HyperpriorConfig
from .motion.flow import PyramidFlowNet
from .motion.mcnet import McNet
from .motion.pipeline import MotionModule
from .rate_adaption import (INTER_COND_DIM, INTRA_COND_DIM, LAMBDA_I_GROUPS,
                            LAMBDA_P_VALUES, RateAdaptionNet,
                            group_for_lambda_i, inter_condition,
                            intra_condition)

PAD_MULTIPLE = 64


@dataclass(frozen=True)
class CodecConfig:
    intra: AnfConfig
    inter: AnfConfig
    motion: HyperpriorConfig
    residual: Optional[HyperpriorConfig] = None
    flow_levels: int = 3
    flow_widths: tuple = (32, 64, 32, 16)
    flow_kernel: int = 7
    mcnet_width: int = 48

    @classmethod
    def paper(cls, with_residual: bool = False) -> "CodecConfig":
        return cls(intra=AnfConfig.intra(), inter=AnfConfig.inter(),
                   motion=HyperpriorConfig.motion(),
                   residual=HyperpriorConfig.residual() if with_residual else None)

    @classmethod
    def tiny(cls, with_residual: bool = False) -> "CodecConfig":
        return cls(intra=AnfConfig.intra_tiny(), inter=AnfConfig.inter_tiny(),
                   motion=HyperpriorConfig.motion_tiny(),
                   residual=HyperpriorConfig(in_channels=6, n=48, m=48, k=48, l=48,
                                             depth=3)
                   if with_residual else None,
                   flow_widths=(16, 32, 16, 8), flow_kernel=5, mcnet_width=24)


@dataclass(frozen=True)
class GopConfig:
    gop_size: int = 12
    mode: str = "conditional"  # or "residual"

    def __post_init__(self):
        if self.gop_size < 1:
            raise ValueError("gop_size must be >= 1")
        if self.mode not in ("conditional", "residual"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def is_intra(self, t: int) -> bool:
        return t % self.gop_size == 0


@dataclass
class FrameStats:
    index: int
    frame_type: int
    bits: int
    bpp: float
    psnr: float = float("nan")
    motion_bits: int = 0


@dataclass
class EncodeOutcome:
    bitstream: SequenceBitstream
    reconstructions: list[Frame420]
    stats: list[FrameStats]

    @property
    def bpp(self) -> float:
        return self.bitstream.bpp


def _channel_indexes(shape) -> np.ndarray:
    """Per-element table index for factorized-prior coding: the channel id."""
    c, h, w = shape
    return np.repeat(np.arange(c, dtype=np.int32), h * w)


class VideoCodec(nn.Module):
    def __init__(self, cfg: CodecConfig, flow_source: Optional[nn.Module] = None):
        super().__init__()
        self.cfg = cfg
        self.intra_coder = AnfCoder(cfg.intra)
        self.inter_coder = AnfCoder(cfg.inter)
        flow = flow_source if flow_source is not None else PyramidFlowNet(
            cfg.flow_levels, cfg.flow_widths, cfg.flow_kernel)
        self.motion = MotionModule(HyperpriorCoder(cfg.motion), flow,
                                   McNet(cfg.mcnet_width))
        self.residual_coder = HyperpriorCoder(cfg.residual) if cfg.residual else None
        self.intra_rate = RateAdaptionNet(INTRA_COND_DIM, self.intra_coder.mod_layout())
        self.inter_rate = RateAdaptionNet(INTER_COND_DIM, self.inter_coder.mod_layout())
        self.motion_rate = RateAdaptionNet(INTER_COND_DIM, self.motion.coder.mod_layout())
        self._tables: Optional[dict[str, TableSet]] = None

    # -- entropy table cache ---------------------------------------------

    def coding_tables(self) -> dict[str, TableSet]:
        if self._tables is None:
            tabs = {
                "intra_h": self.intra_coder.prior.build_tables(),
                "inter_h": self.inter_coder.prior.build_tables(),
                "motion_h": self.motion.coder.prior.build_tables(),
            }
            if self.residual_coder is not None:
                tabs["residual_h"] = self.residual_coder.prior.build_tables()
            self._tables = tabs
        return self._tables

    def invalidate_tables(self):
        """Call after weight updates; CDF tables are rebuilt on next use."""
        self._tables = None

    def model_hash(self) -> bytes:
        """16-byte digest over all weights; names the checkpoint a stream needs."""
        digest = hashlib.sha256()
        for name, tensor in self.state_dict().items():
            digest.update(name.encode())
            digest.update(str(tuple(tensor.shape)).encode())
            digest.update(tensor.detach().cpu().numpy().tobytes())
        return digest.digest()[:16]

    # -- chunk helpers -----------------------------------------------------

    @staticmethod
    def _code_factorized(latent: torch.Tensor, tables: TableSet) -> BitChunk:
        sym = latent[0].detach().to(torch.int32).cpu().numpy()
        return encode_chunk(sym, _channel_indexes(sym.shape), tables)

    @staticmethod
    def _decode_factorized(chunk: BitChunk, tables: TableSet, shape) -> torch.Tensor:
        sym = decode_chunk(chunk, _channel_indexes(shape), tables)
        return torch.from_numpy(sym.reshape(shape).astype(np.float32)).unsqueeze(0)

    @staticmethod
    def _code_gaussian(latent: torch.Tensor, scales: torch.Tensor) -> BitChunk:
        sym = latent[0].detach().to(torch.int32).cpu().numpy()
        idx = indexes_for_scales(scales[0])
        return encode_chunk(sym, idx, gaussian_table_set())

    @staticmethod
    def _decode_gaussian(chunk: BitChunk, scales: torch.Tensor) -> torch.Tensor:
        shape = tuple(scales.shape[1:])
        sym = decode_chunk(chunk, indexes_for_scales(scales[0]), gaussian_table_set())
        return torch.from_numpy(sym.reshape(shape).astype(np.float32)).unsqueeze(0)

    # -- intra frames --------------------------------------------------------

    @torch.no_grad()
    def encode_intra_frame(self, x: torch.Tensor, lambda_i: float
                           ) -> tuple[torch.Tensor, EncodedFrame]:
        mods = self.intra_rate(intra_condition(lambda_i))
        res = self.intra_coder.encode(x, mode="eval", mods=mods)
        chunk_h = self._code_factorized(res.h_hat, self.coding_tables()["intra_h"])
        chunk_z = self._code_gaussian(res.z_hat, res.scales)
        return res.x_hat, EncodedFrame(FRAME_INTRA, [chunk_h, chunk_z])

    @torch.no_grad()
    def decode_intra_frame(self, frame: EncodedFrame, lambda_i: float,
                           packed_hw: tuple[int, int]) -> torch.Tensor:
        mods = self.intra_rate(intra_condition(lambda_i))
        h, w = packed_hw
        cfg = self.cfg.intra
        h_shape = (cfg.l, h // 32, w // 32)
        h_hat = self._decode_factorized(frame.chunks[0],
                                        self.coding_tables()["intra_h"], h_shape)
        _, scales = self.intra_coder.scales_for(h_hat, mods=mods)
        z_hat = self._decode_gaussian(frame.chunks[1], scales)
        return self.intra_coder.decode(z_hat, h_hat, mods=mods)

    @torch.no_grad()
    def intra_reconstruct(self, x: torch.Tensor, lambda_i: float) -> torch.Tensor:
        """Eval-mode intra reconstruction without entropy coding (for
        building P-frame training references)."""
        mods = self.intra_rate(intra_condition(lambda_i))
        return self.intra_coder.encode(x, mode="eval", mods=mods).x_hat

    # -- inter frames ----------------------------------------------------

    def _motion_mods(self, lambda_p_index: int):
        cond = inter_condition(lambda_p_index)
        return self.motion_rate(cond), self.inter_rate(cond)

    @torch.no_grad()
    def _decode_motion(self, chunks: Sequence[BitChunk], ref: torch.Tensor,
                       m_mods) -> tuple[torch.Tensor, torch.Tensor]:
        h, w = ref.shape[-2:]
        mh_shape = (self.cfg.motion.l, h // 32, w // 32)
        mh = self._decode_factorized(chunks[0], self.coding_tables()["motion_h"],
                                     mh_shape)
        _, scales = self.motion.coder.scales_for(mh, mods=m_mods)
        my = self._decode_gaussian(chunks[1], scales)
        flow_hat = self.motion.decode_flow(my, mh, mods=m_mods)
        x_tilde, _ = self.motion.compensate(ref, flow_hat)
        return x_tilde, flow_hat

    @torch.no_grad()
    def encode_inter_frame(self, x: torch.Tensor, ref: torch.Tensor,
                           lambda_p_index: int, frame_index: int = 0
                           ) -> tuple[torch.Tensor, EncodedFrame]:
        m_mods, i_mods = self._motion_mods(lambda_p_index)
        mres = self.motion.predict(x, ref, mode="eval", mods=m_mods,
                                   frame_index=frame_index)
        chunk_mh = self._code_factorized(mres.coded.h_hat,
                                         self.coding_tables()["motion_h"])
        chunk_my = self._code_gaussian(mres.coded.y_hat, mres.coded.scales)
        cond = self.inter_coder.condition(mres.x_tilde)
        res = self.inter_coder.encode(x, cond, mode="eval", mods=i_mods)
        chunk_h = self._code_factorized(res.h_hat, self.coding_tables()["inter_h"])
        chunk_z = self._code_gaussian(res.z_hat, res.scales)
        return res.x_hat, EncodedFrame(
            FRAME_INTER, [chunk_mh, chunk_my, chunk_h, chunk_z])

    @torch.no_grad()
    def decode_inter_frame(self, frame: EncodedFrame, ref: torch.Tensor,
                           lambda_p_index: int) -> torch.Tensor:
        m_mods, i_mods = self._motion_mods(lambda_p_index)
        x_tilde, _ = self._decode_motion(frame.chunks[:2], ref, m_mods)
        cond = self.inter_coder.condition(x_tilde)
        h, w = ref.shape[-2:]
        h_shape = (self.cfg.inter.l, h // 32, w // 32)
        h_hat = self._decode_factorized(frame.chunks[2],
                                        self.coding_tables()["inter_h"], h_shape)
        _, scales = self.inter_coder.scales_for(h_hat, mods=i_mods)
        z_hat = self._decode_gaussian(frame.chunks[3], scales)
        return self.inter_coder.decode(z_hat, h_hat, cond, mods=i_mods)

    # -- residual baseline -------------------------------------------------

    def _require_residual(self) -> HyperpriorCoder:
        if self.residual_coder is None:
            raise ValueError("codec was built without a residual coder")
        return self.residual_coder

    @torch.no_grad()
    def encode_residual_frame(self, x: torch.Tensor, ref: torch.Tensor,
                              lambda_p_index: int, frame_index: int = 0
                              ) -> tuple[torch.Tensor, EncodedFrame]:
        coder = self._require_residual()
        m_mods, _ = self._motion_mods(lambda_p_index)
        mres = self.motion.predict(x, ref, mode="eval", mods=m_mods,
                                   frame_index=frame_index)
        chunk_mh = self._code_factorized(mres.coded.h_hat,
                                         self.coding_tables()["motion_h"])
        chunk_my = self._code_gaussian(mres.coded.y_hat, mres.coded.scales)
        rres = coder.encode(x - mres.x_tilde, mode="eval")
        chunk_rh = self._code_factorized(rres.h_hat, self.coding_tables()["residual_h"])
        chunk_ry = self._code_gaussian(rres.y_hat, rres.scales)
        x_hat = (mres.x_tilde + rres.v_hat).clamp(0.0, 1.0)
        return x_hat, EncodedFrame(
            FRAME_RESIDUAL, [chunk_mh, chunk_my, chunk_rh, chunk_ry])

    @torch.no_grad()
    def decode_residual_frame(self, frame: EncodedFrame, ref: torch.Tensor,
                              lambda_p_index: int) -> torch.Tensor:
        coder = self._require_residual()
        m_mods, _ = self._motion_mods(lambda_p_index)
        x_tilde, _ = self._decode_motion(frame.chunks[:2], ref, m_mods)
        h, w = ref.shape[-2:]
        rh_shape = (self.cfg.residual.l, h // 32, w // 32)
        rh = self._decode_factorized(frame.chunks[2],
                                     self.coding_tables()["residual_h"], rh_shape)
        _, scales = coder.scales_for(rh)
        ry = self._decode_gaussian(frame.chunks[3], scales)
        return (x_tilde + coder.decode(ry, rh)).clamp(0.0, 1.0)

    # -- sequences ---------------------------------------------------------

    @torch.no_grad()
    def encode_sequence(self, frames: Sequence[Frame420], gop: GopConfig,
                        lambda_p_index: Optional[int] = None,
                        lambda_i: Optional[float] = None) -> EncodeOutcome:
        if not frames:
            raise ValueError("empty sequence")
        w, h = frames[0].width, frames[0].height
        for i, f in enumerate(frames):
            if (f.width, f.height) != (w, h):
                raise ValueError(f"frame {i} is {f.width}x{f.height}, expected {w}x{h}")
        if lambda_p_index is None:
            lambda_p_index = group_for_lambda_i(lambda_i) if lambda_i is not None else 1
        if lambda_i is None:
            lo, hi = LAMBDA_I_GROUPS[lambda_p_index]
            lambda_i = float(np.sqrt(lo * hi))
        # the stream header carries lambda_i in 32 bits; the rate-adaption
        # conditions must be derived from exactly the value the decoder will
        # read back, or the two sides disagree on the coding distributions
        lambda_i = float(np.float32(lambda_i))

        mode = MODE_CONDITIONAL if gop.mode == "conditional" else MODE_RESIDUAL
        header = SequenceHeader(w, h, len(frames), gop.gop_size, mode,
                                lambda_p_index, lambda_i, self.model_hash())
        self.eval()
        coded, recons, stats = [], [], []
        ref: Optional[torch.Tensor] = None
        n_pixels = w * h
        for t, frame in enumerate(frames):
            x = pack_frame(pad_frame(frame, PAD_MULTIPLE)).unsqueeze(0)
            if gop.is_intra(t) or ref is None:
                x_hat, enc = self.encode_intra_frame(x, lambda_i)
            elif gop.mode == "conditional":
                x_hat, enc = self.encode_inter_frame(x, ref, lambda_p_index, t)
            else:
                x_hat, enc = self.encode_residual_frame(x, ref, lambda_p_index, t)
            ref = x_hat
            rec = crop_frame(unpack_frame(x_hat[0]), w, h)
            recons.append(rec)
            motion_bits = sum(c.bits for c in enc.chunks[:2]) if len(enc.chunks) == 4 else 0
            stats.append(FrameStats(t, enc.frame_type, enc.bits, enc.bits / n_pixels,
                                    psnr_yuv(frame, rec), motion_bits))
            coded.append(enc)
        return EncodeOutcome(SequenceBitstream(header, coded), recons, stats)

    @torch.no_grad()
    def decode_sequence(self, stream) -> list[Frame420]:
        if isinstance(stream, (bytes, bytearray, memoryview)):
            stream = SequenceBitstream.deserialize(bytes(stream))
        header = stream.header
        if header.model_hash != self.model_hash():
            raise ChecksumMismatchError(
                "bitstream was produced by a different checkpoint "
                f"({header.model_hash.hex()} != {self.model_hash().hex()})")
        pw, ph = padded_size(header.width, header.height, PAD_MULTIPLE)
        packed_hw = (ph // 2, pw // 2)
        self.eval()
        out: list[Frame420] = []
        ref: Optional[torch.Tensor] = None
        for t, frame in enumerate(stream.frames):
            if frame.frame_type == FRAME_INTRA:
                x_hat = self.decode_intra_frame(frame, header.lambda_i, packed_hw)
            elif ref is None:
                raise BitstreamError(f"frame {t} is inter but no reference exists")
            elif frame.frame_type == FRAME_INTER:
                x_hat = self.decode_inter_frame(frame, ref, header.lambda_p_index)
            else:
                x_hat = self.decode_residual_frame(frame, ref, header.lambda_p_index)
            ref = x_hat
            out.append(crop_frame(unpack_frame(x_hat[0]), header.width, header.height))
        return out


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def _config_to_dict(cfg: CodecConfig) -> dict:
    return asdict(cfg)


def _config_from_dict(d: dict) -> CodecConfig:
    return CodecConfig(
        intra=AnfConfig(**d["intra"]),
        inter=AnfConfig(**d["inter"]),
        motion=HyperpriorConfig(**d["motion"]),
        residual=HyperpriorConfig(**d["residual"]) if d.get("residual") else None,
        flow_levels=d["flow_levels"], flow_widths=tuple(d["flow_widths"]),
        flow_kernel=d["flow_kernel"], mcnet_width=d["mcnet_width"],
    )


def save_checkpoint(codec: VideoCodec, path, meta: Optional[dict] = None) -> bytes:
    """Write weights + config; returns the model hash the file serves."""
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": _config_to_dict(codec.cfg),
        "state": codec.state_dict(),
        "meta": dict(meta or {}),
    }
    torch.save(payload, path)
    return codec.model_hash()


def load_checkpoint(path, flow_source: Optional[nn.Module] = None) -> VideoCodec:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    codec = VideoCodec(_config_from_dict(payload["config"]), flow_source=flow_source)
    codec.load_state_dict(payload["state"])
    codec.eval()
    return codec


def checkpoint_meta(path) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    return payload.get("meta", {})
