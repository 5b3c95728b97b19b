"""Integer CDF tables shared by every entropy coder implementation.

Tables use 16-bit cumulative frequencies (total = 2**16) and are always
built here, in integer arithmetic, so the reference coder and any
accelerated drop-in agree bit-exactly. Each table reserves its final bin
as an escape symbol for values outside the modeled support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

PRECISION = 16
TOTAL_FREQ = 1 << PRECISION

# nearest-integer bins of N(0, sigma) are negligible past this many sigmas
GAUSSIAN_TAIL_SIGMAS = 6.2


@dataclass
class TableSet:
    """A batch of CDF tables addressed by per-symbol indexes.

    cdfs:    (n_tables, max_len) int32, row t valid up to lengths[t];
             cdfs[t, 0] == 0 and cdfs[t, lengths[t]-1] == TOTAL_FREQ.
    lengths: (n_tables,) int32, number of cumulative entries per row
             (bin count + 1; the last bin is the escape symbol).
    offsets: (n_tables,) int32, integer value of the first non-escape bin.
    """

    cdfs: np.ndarray
    lengths: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        self.cdfs = np.ascontiguousarray(self.cdfs, dtype=np.int32)
        self.lengths = np.ascontiguousarray(self.lengths, dtype=np.int32)
        self.offsets = np.ascontiguousarray(self.offsets, dtype=np.int32)
        if self.cdfs.ndim != 2:
            raise ValueError("cdfs must be 2-D")
        n = self.cdfs.shape[0]
        if self.lengths.shape != (n,) or self.offsets.shape != (n,):
            raise ValueError("lengths/offsets must match table count")
        for t in range(n):
            row = self.cdfs[t, : self.lengths[t]]
            if row[0] != 0 or row[-1] != TOTAL_FREQ:
                raise ValueError(f"table {t}: cumulative must span [0, {TOTAL_FREQ}]")
            if np.any(np.diff(row) <= 0):
                raise ValueError(f"table {t}: cumulative must be strictly increasing")

    @property
    def n_tables(self) -> int:
        return self.cdfs.shape[0]


def quantize_pmf(pmf: np.ndarray) -> np.ndarray:
    """Deterministically quantize a pmf to integer frequencies.

    Every bin gets at least one count and the counts sum to TOTAL_FREQ.
    The rounding drift is absorbed by the largest bins (ties break toward
    the lowest index, numpy argmax order).
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size < 1:
        raise ValueError("pmf must be a non-empty 1-D array")
    if pmf.size > TOTAL_FREQ // 2:
        raise ValueError("too many bins for 16-bit frequencies")
    if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
        raise ValueError("pmf entries must be finite and non-negative")
    total = pmf.sum()
    if total <= 0:
        raise ValueError("pmf must have positive mass")

    freqs = np.floor(pmf / total * TOTAL_FREQ).astype(np.int64)
    freqs = np.maximum(freqs, 1)
    diff = TOTAL_FREQ - int(freqs.sum())
    if diff > 0:
        freqs[int(np.argmax(freqs))] += diff
    while diff < 0:
        i = int(np.argmax(freqs))
        take = min(int(freqs[i]) - 1, -diff)
        if take <= 0:
            raise ValueError("cannot fit pmf into 16-bit frequencies")
        freqs[i] -= take
        diff += take
    return freqs.astype(np.int32)


def pmf_to_cdf_row(pmf: np.ndarray) -> np.ndarray:
    """pmf (escape slot already appended) -> cumulative row."""
    freqs = quantize_pmf(pmf)
    return np.concatenate([[0], np.cumsum(freqs)]).astype(np.int32)


def build_table_set(pmfs: list[np.ndarray], offsets: list[int]) -> TableSet:
    """Stack per-table pmfs (each including its escape slot last)."""
    rows = [pmf_to_cdf_row(p) for p in pmfs]
    max_len = max(len(r) for r in rows)
    cdfs = np.zeros((len(rows), max_len), dtype=np.int32)
    lengths = np.zeros(len(rows), dtype=np.int32)
    for t, row in enumerate(rows):
        cdfs[t, : len(row)] = row
        lengths[t] = len(row)
    return TableSet(cdfs, lengths, np.asarray(offsets, dtype=np.int32))


def gaussian_pmf(sigma: float) -> tuple[np.ndarray, int]:
    """Integer-bin pmf of N(0, sigma) plus an escape slot.

    Returns (pmf, offset) where pmf[-1] is the escape mass.
    """
    half = max(1, int(np.ceil(sigma * GAUSSIAN_TAIL_SIGMAS)))
    q = np.arange(-half, half + 1, dtype=np.float64)
    upper = ndtr((q + 0.5) / sigma)
    lower = ndtr((q - 0.5) / sigma)
    pmf = upper - lower
    escape = max(1.0 - pmf.sum(), 1e-12)
    return np.concatenate([pmf, [escape]]), -half
