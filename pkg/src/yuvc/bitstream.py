"""Sequence bitstream container.

Layout (all integers little-endian, documented bit-exactly in
docs/bitstream.md):

    header:  magic "YVC1" | version u8 | mode u8 | lambda_p_index u8 |
             reserved u8 | width u32 | height u32 | frame_count u32 |
             gop_size u32 | lambda_i f32 | model_hash 16 bytes
    frames:  frame_type u8 | chunk_count u8 | chunks...

Each chunk is ``[u32 symbol count][u32 payload bytes][payload]``. Width and
height are the original (pre-padding) luma dimensions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

from .entropy.chunks import BitChunk, read_chunk
from .errors import BitstreamError

MAGIC = b"YVC1"
VERSION = 1

MODE_CONDITIONAL = 0
MODE_RESIDUAL = 1

FRAME_INTRA = 0
FRAME_INTER = 1
FRAME_RESIDUAL = 2

_HEADER = struct.Struct("<4sBBBBIIIIf16s")
_FRAME_HEADER = struct.Struct("<BB")


@dataclass
class EncodedFrame:
    frame_type: int
    chunks: list[BitChunk]

    @property
    def bits(self) -> int:
        return _FRAME_HEADER.size * 8 + sum(c.bits for c in self.chunks)


@dataclass
class SequenceHeader:
    width: int
    height: int
    frame_count: int
    gop_size: int
    mode: int = MODE_CONDITIONAL
    lambda_p_index: int = 0
    lambda_i: float = 0.0
    model_hash: bytes = b"\x00" * 16

    def __post_init__(self):
        if len(self.model_hash) != 16:
            raise ValueError("model_hash must be 16 bytes")
        if self.mode not in (MODE_CONDITIONAL, MODE_RESIDUAL):
            raise ValueError(f"unknown mode {self.mode}")

    def pack(self) -> bytes:
        return _HEADER.pack(MAGIC, VERSION, self.mode, self.lambda_p_index, 0,
                            self.width, self.height, self.frame_count,
                            self.gop_size, self.lambda_i, self.model_hash)

    @classmethod
    def unpack(cls, data: bytes) -> "SequenceHeader":
        if len(data) < _HEADER.size:
            raise BitstreamError("truncated header")
        magic, version, mode, lp, _, w, h, n, gop, li, mhash = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BitstreamError(f"bad magic {magic!r}")
        if version != VERSION:
            raise BitstreamError(f"unsupported version {version}")
        return cls(w, h, n, gop, mode, lp, li, mhash)


@dataclass
class SequenceBitstream:
    header: SequenceHeader
    frames: list[EncodedFrame] = field(default_factory=list)

    @property
    def total_bits(self) -> int:
        return _HEADER.size * 8 + sum(f.bits for f in self.frames)

    @property
    def bpp(self) -> float:
        h = self.header
        return self.total_bits / (h.width * h.height * h.frame_count)

    def serialize(self) -> bytes:
        if len(self.frames) != self.header.frame_count:
            raise BitstreamError(
                f"header says {self.header.frame_count} frames, have {len(self.frames)}")
        parts = [self.header.pack()]
        for f in self.frames:
            if not 0 <= f.frame_type <= FRAME_RESIDUAL:
                raise BitstreamError(f"bad frame type {f.frame_type}")
            parts.append(_FRAME_HEADER.pack(f.frame_type, len(f.chunks)))
            parts.extend(c.to_bytes() for c in f.chunks)
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "SequenceBitstream":
        header = SequenceHeader.unpack(data)
        pos = _HEADER.size
        frames = []
        for t in range(header.frame_count):
            if pos + _FRAME_HEADER.size > len(data):
                raise BitstreamError(f"truncated at frame {t}")
            ftype, n_chunks = _FRAME_HEADER.unpack_from(data, pos)
            if ftype > FRAME_RESIDUAL:
                raise BitstreamError(f"bad frame type {ftype} at frame {t}")
            pos += _FRAME_HEADER.size
            chunks = []
            for _ in range(n_chunks):
                chunk, pos = read_chunk(data, pos)
                chunks.append(chunk)
            frames.append(EncodedFrame(ftype, chunks))
        if pos != len(data):
            raise BitstreamError(f"{len(data) - pos} trailing bytes after last frame")
        return cls(header, frames)
