"""Reference entropy coder: single-lane byte-renormalized rANS.

This is the parity contract for accelerated implementations:

* 32-bit state, lower renormalization bound 2**23, one byte per renorm.
* 16-bit frequencies from :mod:`.tables`.
* Symbols are encoded in reverse so the decoder reads the payload forward.
* Payload = 4 little-endian state bytes followed by the renorm bytes;
  an empty symbol list produces an empty payload.
* Values outside a table's support are escape-coded: the table's last bin
  followed by eight 4-bit bypass nibbles (most significant first) holding
  the value as two's-complement uint32. Bypass nibbles use an implicit
  uniform table (freq 2**12 each).
* After decoding, the state must return to the lower bound with the
  payload fully consumed; anything else raises EntropyDecodeError.
"""

from __future__ import annotations

import numpy as np

from ..errors import EntropyDecodeError
from .tables import PRECISION, TOTAL_FREQ, TableSet

RANS_LOWER = 1 << 23
_STATE_MASK = TOTAL_FREQ - 1
_NIBBLE_FREQ = TOTAL_FREQ >> 4
_NIBBLE_COUNT = 8
_U32 = 1 << 32


def _build_ops(symbols: np.ndarray, indexes: np.ndarray, tables: TableSet):
    """Flatten (symbol, table) pairs into forward-order (start, freq) ops."""
    ops: list[tuple[int, int]] = []
    cdfs, lengths, offsets = tables.cdfs, tables.lengths, tables.offsets
    for sym, t in zip(symbols.tolist(), indexes.tolist()):
        n_real = int(lengths[t]) - 2
        v = sym - int(offsets[t])
        if 0 <= v < n_real:
            ops.append((int(cdfs[t, v]), int(cdfs[t, v + 1]) - int(cdfs[t, v])))
        else:
            esc = n_real
            ops.append((int(cdfs[t, esc]), int(cdfs[t, esc + 1]) - int(cdfs[t, esc])))
            u = sym % _U32
            for k in range(_NIBBLE_COUNT - 1, -1, -1):
                nib = (u >> (4 * k)) & 0xF
                ops.append((nib * _NIBBLE_FREQ, _NIBBLE_FREQ))
    return ops


def _check_inputs(symbols, indexes, tables: TableSet):
    symbols = np.ascontiguousarray(symbols, dtype=np.int64).ravel()
    indexes = np.ascontiguousarray(indexes, dtype=np.int64).ravel()
    if symbols.shape != indexes.shape:
        raise ValueError("symbols and indexes must have equal length")
    if symbols.size and (indexes.min() < 0 or indexes.max() >= tables.n_tables):
        raise ValueError("table index out of range")
    return symbols, indexes


def encode_with_indexes(symbols, indexes, tables: TableSet) -> bytes:
    """Encode integer symbols, each under its indexed CDF table."""
    symbols, indexes = _check_inputs(symbols, indexes, tables)
    if symbols.size == 0:
        return b""
    ops = _build_ops(symbols, indexes, tables)
    x = RANS_LOWER
    renorm_base = (RANS_LOWER >> PRECISION) << 8
    out = bytearray()
    for start, freq in reversed(ops):
        x_max = renorm_base * freq
        while x >= x_max:
            out.append(x & 0xFF)
            x >>= 8
        x = ((x // freq) << PRECISION) + (x % freq) + start
    out.reverse()
    return x.to_bytes(4, "little") + bytes(out)


def decode_with_indexes(payload: bytes, indexes, tables: TableSet) -> np.ndarray:
    """Decode as many symbols as there are indexes; verifies stream integrity."""
    indexes = np.ascontiguousarray(indexes, dtype=np.int64).ravel()
    n = indexes.size
    if n == 0:
        if payload:
            raise EntropyDecodeError("payload not empty for zero symbols")
        return np.zeros(0, dtype=np.int32)
    if indexes.min() < 0 or indexes.max() >= tables.n_tables:
        raise ValueError("table index out of range")
    if len(payload) < 4:
        raise EntropyDecodeError("payload shorter than coder state")

    cdfs, lengths, offsets = tables.cdfs, tables.lengths, tables.offsets
    x = int.from_bytes(payload[:4], "little")
    pos = 4
    end = len(payload)
    out = np.empty(n, dtype=np.int32)

    def renorm(x: int) -> int:
        nonlocal pos
        while x < RANS_LOWER:
            if pos >= end:
                raise EntropyDecodeError("payload exhausted mid-stream")
            x = (x << 8) | payload[pos]
            pos += 1
        return x

    for i in range(n):
        t = int(indexes[i])
        row = cdfs[t, : lengths[t]]
        cf = x & _STATE_MASK
        s = int(np.searchsorted(row, cf, side="right")) - 1
        start = int(row[s])
        freq = int(row[s + 1]) - start
        x = freq * (x >> PRECISION) + cf - start
        x = renorm(x)
        n_real = int(lengths[t]) - 2
        if s < n_real:
            out[i] = s + int(offsets[t])
        else:
            u = 0
            for _ in range(_NIBBLE_COUNT):
                cf = x & _STATE_MASK
                nib = cf >> 12
                x = _NIBBLE_FREQ * (x >> PRECISION) + cf - nib * _NIBBLE_FREQ
                x = renorm(x)
                u = (u << 4) | nib
            out[i] = u - _U32 if u >= _U32 >> 1 else u
    if x != RANS_LOWER or pos != end:
        raise EntropyDecodeError("corrupted chunk: coder state did not close")
    return out
