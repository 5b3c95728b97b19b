"""Entropy coder backend selection.

The reference coder is pure Python. If the accelerated shared library
(``fast_entropy``, built separately) is present it is used instead; it is
byte-for-byte parity-tested against the reference. Force a backend with
``YUVC_ENTROPY=reference|fast``.
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from ..errors import EntropyDecodeError
from . import rans
from .tables import TableSet

_LIB_BASENAME = "libfast_entropy.so"


class ReferenceCoder:
    name = "reference"

    @staticmethod
    def encode_with_indexes(symbols, indexes, tables: TableSet) -> bytes:
        return rans.encode_with_indexes(symbols, indexes, tables)

    @staticmethod
    def decode_with_indexes(payload, indexes, tables: TableSet) -> np.ndarray:
        return rans.decode_with_indexes(payload, indexes, tables)


class FastCoder:
    """ctypes wrapper over the accelerated coder's flat-buffer C ABI."""

    name = "fast"

    def __init__(self, path: str):
        lib = ctypes.CDLL(path)
        lib.fe_encode.restype = ctypes.c_int
        lib.fe_encode.argtypes = [
            ctypes.POINTER(ctypes.c_int32), ctypes.POINTER(ctypes.c_int32),
            ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32), ctypes.POINTER(ctypes.c_int32),
            ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_size_t),
        ]
        lib.fe_decode.restype = ctypes.c_int
        lib.fe_decode.argtypes = [
            ctypes.POINTER(ctypes.c_uint8), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32), ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32), ctypes.POINTER(ctypes.c_int32),
            ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_int32),
        ]
        self._lib = lib
        self.path = path

    @staticmethod
    def _flat(tables: TableSet):
        cdfs = np.ascontiguousarray(tables.cdfs, dtype=np.int32)
        lengths = np.ascontiguousarray(tables.lengths, dtype=np.int32)
        offsets = np.ascontiguousarray(tables.offsets, dtype=np.int32)
        return cdfs, lengths, offsets

    def encode_with_indexes(self, symbols, indexes, tables: TableSet) -> bytes:
        symbols = np.ascontiguousarray(symbols, dtype=np.int32).ravel()
        indexes = np.ascontiguousarray(indexes, dtype=np.int32).ravel()
        if symbols.size != indexes.size:
            raise ValueError("symbols and indexes must have equal length")
        if symbols.size == 0:
            return b""
        cdfs, lengths, offsets = self._flat(tables)
        # worst case: every symbol escapes (table bin + 8 nibbles) + state flush
        cap = symbols.size * 24 + 64
        out = np.zeros(cap, dtype=np.uint8)
        out_len = ctypes.c_size_t(0)
        rc = self._lib.fe_encode(
            symbols.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            indexes.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            symbols.size,
            cdfs.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            cdfs.shape[1],
            lengths.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            offsets.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            tables.n_tables,
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_uint8)),
            cap,
            ctypes.byref(out_len),
        )
        if rc != 0:
            raise RuntimeError(f"fast entropy encoder failed (code {rc})")
        return out[: out_len.value].tobytes()

    def decode_with_indexes(self, payload, indexes, tables: TableSet) -> np.ndarray:
        indexes = np.ascontiguousarray(indexes, dtype=np.int32).ravel()
        if indexes.size == 0:
            if payload:
                raise EntropyDecodeError("payload not empty for zero symbols")
            return np.zeros(0, dtype=np.int32)
        buf = np.frombuffer(bytes(payload), dtype=np.uint8)
        cdfs, lengths, offsets = self._flat(tables)
        out = np.zeros(indexes.size, dtype=np.int32)
        rc = self._lib.fe_decode(
            buf.ctypes.data_as(ctypes.POINTER(ctypes.c_uint8)),
            buf.size,
            indexes.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            indexes.size,
            cdfs.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            cdfs.shape[1],
            lengths.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            offsets.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
            tables.n_tables,
            out.ctypes.data_as(ctypes.POINTER(ctypes.c_int32)),
        )
        if rc != 0:
            raise EntropyDecodeError(f"fast entropy decoder failed (code {rc})")
        return out


def _candidate_paths():
    env = os.environ.get("YUVC_FAST_ENTROPY_LIB")
    if env:
        yield Path(env)
    root = Path(__file__).resolve().parents[3]
    yield root / "fast_entropy" / "target" / "release" / _LIB_BASENAME
    yield Path.cwd() / "fast_entropy" / "target" / "release" / _LIB_BASENAME


_fast_coder = None
_fast_probed = False


def _load_fast():
    global _fast_coder, _fast_probed
    if not _fast_probed:
        _fast_probed = True
        for p in _candidate_paths():
            if p.is_file():
                try:
                    _fast_coder = FastCoder(str(p))
                    break
                except OSError:
                    continue
    return _fast_coder


def accelerated_available() -> bool:
    return _load_fast() is not None


def get_coder(prefer: str | None = None):
    """Pick the entropy coder backend (reference unless fast is available)."""
    choice = prefer or os.environ.get("YUVC_ENTROPY", "")
    if choice not in ("", "reference", "fast"):
        raise ValueError(f"unknown entropy backend {choice!r} "
                         "(expected 'reference' or 'fast')")
    if choice == "reference":
        return ReferenceCoder()
    fast = _load_fast()
    if choice == "fast":
        if fast is None:
            raise RuntimeError("fast entropy coder requested but not available")
        return fast
    return fast if fast is not None else ReferenceCoder()
