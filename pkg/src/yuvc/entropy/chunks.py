"""Entropy-coded chunk framing: [u32 symbol count][u32 payload bytes][payload].

All integers little-endian. This layout (together with the rANS stream
format) is the wire contract shared with accelerated coder drop-ins.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import BitstreamError
from .backend import get_coder
from .tables import TableSet

_HEADER = struct.Struct("<II")


@dataclass(frozen=True)
class BitChunk:
    symbol_count: int
    payload: bytes

    @property
    def bits(self) -> int:
        """Size on the wire including the chunk header."""
        return (_HEADER.size + len(self.payload)) * 8

    def to_bytes(self) -> bytes:
        return _HEADER.pack(self.symbol_count, len(self.payload)) + self.payload


def read_chunk(buf: bytes, pos: int) -> tuple[BitChunk, int]:
    if pos + _HEADER.size > len(buf):
        raise BitstreamError("truncated chunk header")
    count, size = _HEADER.unpack_from(buf, pos)
    pos += _HEADER.size
    if pos + size > len(buf):
        raise BitstreamError("truncated chunk payload")
    return BitChunk(count, bytes(buf[pos : pos + size])), pos + size


def encode_chunk(symbols, indexes, tables: TableSet, coder=None) -> BitChunk:
    coder = coder or get_coder()
    symbols = np.ascontiguousarray(symbols, dtype=np.int32).ravel()
    payload = coder.encode_with_indexes(symbols, indexes, tables)
    return BitChunk(int(symbols.size), payload)


def decode_chunk(chunk: BitChunk, indexes, tables: TableSet, coder=None) -> np.ndarray:
    coder = coder or get_coder()
    indexes = np.ascontiguousarray(indexes, dtype=np.int32).ravel()
    if indexes.size != chunk.symbol_count:
        raise BitstreamError(
            f"chunk holds {chunk.symbol_count} symbols but {indexes.size} expected"
        )
    return coder.decode_with_indexes(chunk.payload, indexes, tables)
