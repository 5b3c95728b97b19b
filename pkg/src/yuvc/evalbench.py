"""RD evaluation: curve assembly from real bitstreams, BD-rate, anchor
ingestion, calibration for target-rate encoding, and report emission.

Every bpp figure here is derived from serialized bytes and every PSNR from a
full decode of those bytes; encoder-side estimates are never reported.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .codec import GopConfig, VideoCodec
from .errors import CodecError
from .frames import Frame420, combine_psnr, psnr_yuv
from .rate_adaption import (LAMBDA_P_VALUES, CalibrationPoint,
                            CalibrationTable, LAMBDA_I_GROUPS, RateSearchResult,
                            mid_lambda_i, search_rate, select_lambda_pair)


class EvaluationError(CodecError):
    """An RD evaluation point failed or produced unusable data."""


@dataclass(frozen=True)
class RdPoint:
    bpp: float
    psnr: float
    lambda_i: Optional[float] = None
    lambda_p: Optional[int] = None
    label: str = ""

    def __post_init__(self):
        if not self.bpp > 0:
            raise ValueError(f"bpp must be positive, got {self.bpp}")
        if not math.isfinite(self.psnr):
            raise ValueError("psnr must be finite")


@dataclass(frozen=True)
class RdCurve:
    points: tuple[RdPoint, ...]
    label: str = ""

    def __post_init__(self):
        if len(self.points) < 4:
            raise ValueError(f"curve needs >= 4 points, got {len(self.points)}")
        bpps = [p.bpp for p in self.points]
        if any(b2 <= b1 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError(f"bpp must be strictly increasing, got {bpps}")

    @classmethod
    def from_points(cls, points: Sequence[RdPoint], label: str = "") -> "RdCurve":
        return cls(tuple(sorted(points, key=lambda p: p.bpp)), label)

    @property
    def bpps(self) -> np.ndarray:
        return np.array([p.bpp for p in self.points])

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])


def _log_rate_integral(psnr: np.ndarray, bpp: np.ndarray, lo: float, hi: float,
                       method: str) -> float:
    """Integral of fitted log10(rate) over quality [lo, hi]."""
    order = np.argsort(psnr)
    psnr, log_rate = psnr[order], np.log10(bpp[order])
    if np.any(np.diff(psnr) <= 0):
        raise EvaluationError(
            "curve quality values must be strictly increasing for BD-rate; "
            f"got {psnr.tolist()}")
    if method == "pchip":
        return float(PchipInterpolator(psnr, log_rate).antiderivative()(
            [lo, hi]) @ np.array([-1.0, 1.0]))
    if method == "cubic":
        poly = np.polynomial.Polynomial.fit(psnr, log_rate, 3).integ()
        return float(poly(hi) - poly(lo))
    raise ValueError(f"unknown BD-rate method {method!r}")


def bd_rate(test: RdCurve, anchor: RdCurve, method: str = "pchip") -> float:
    """Average rate difference (percent) of test vs anchor over the shared
    quality range; negative means the test curve spends fewer bits.

    The default fit is a monotone piecewise cubic (bounded oscillation); the
    classic cubic polynomial fit is available as method="cubic".
    """
    lo = max(test.psnrs.min(), anchor.psnrs.min())
    hi = min(test.psnrs.max(), anchor.psnrs.max())
    if not lo < hi:
        raise EvaluationError(
            f"no quality overlap between curves: test spans "
            f"[{test.psnrs.min():.3f}, {test.psnrs.max():.3f}] dB, anchor "
            f"[{anchor.psnrs.min():.3f}, {anchor.psnrs.max():.3f}] dB")
    diff = (_log_rate_integral(test.psnrs, test.bpps, lo, hi, method)
            - _log_rate_integral(anchor.psnrs, anchor.bpps, lo, hi, method))
    return float((10.0 ** (diff / (hi - lo)) - 1.0) * 100.0)


def measure_point(codec: VideoCodec, frames: Sequence[Frame420], gop: GopConfig,
                  lambda_i: float, lambda_p_index: int,
                  label: str = "") -> tuple[RdPoint, bytes]:
    """Encode, serialize, decode the bytes, and measure (bpp, PSNR)."""
    outcome = codec.encode_sequence(frames, gop, lambda_p_index=lambda_p_index,
                                    lambda_i=lambda_i)
    data = outcome.bitstream.serialize()
    decoded = codec.decode_sequence(data)
    psnr = float(np.mean([psnr_yuv(a, b) for a, b in zip(frames, decoded)]))
    bpp = len(data) * 8 / (len(frames) * frames[0].width * frames[0].height)
    return RdPoint(bpp, psnr, lambda_i, LAMBDA_P_VALUES[lambda_p_index], label), data


def evaluate(codec: VideoCodec, frames: Sequence[Frame420], gop: GopConfig,
             grid: Optional[Sequence[tuple[float, int]]] = None,
             label: str = "") -> RdCurve:
    """RD curve over a (lambda_i, lambda_p index) grid; defaults to the four
    operating points with mid-group intra tradeoffs."""
    if grid is None:
        grid = [(mid_lambda_i(i), i) for i in range(len(LAMBDA_P_VALUES))]
    points = []
    for lambda_i, idx in grid:
        try:
            point, _ = measure_point(codec, frames, gop, lambda_i, idx, label)
        except Exception as exc:
            raise EvaluationError(
                f"evaluation failed at lambda_i={lambda_i:.4g}, "
                f"lambda_p={LAMBDA_P_VALUES[idx]}: {exc}") from exc
        points.append(point)
    try:
        return RdCurve.from_points(points, label)
    except ValueError as exc:
        raise EvaluationError(
            f"measured points do not form a valid RD curve ({exc}); an "
            "untrained or rate-degenerate model can measure equal bpp at "
            "different operating points") from exc


def calibrate(codec: VideoCodec, frames: Sequence[Frame420], gop: GopConfig,
              per_group: int = 1) -> CalibrationTable:
    """Measure bpp at each operating point (per_group intra tradeoffs spread
    geometrically across each group) to support target-rate selection."""
    points = []
    for idx in range(len(LAMBDA_P_VALUES)):
        lo, hi = LAMBDA_I_GROUPS[idx]
        lams = ([mid_lambda_i(idx)] if per_group == 1
                else np.geomspace(lo, hi, per_group).tolist())
        for lam in lams:
            point, _ = measure_point(codec, frames, gop, float(lam), idx)
            points.append(CalibrationPoint(idx, float(lam), point.bpp))
    return CalibrationTable(points)


@dataclass
class TargetRateOutcome:
    data: bytes
    point: RdPoint
    lambda_p_index: int
    search: RateSearchResult


def encode_to_target(codec: VideoCodec, frames: Sequence[Frame420],
                     gop: GopConfig, target_bpp: float,
                     table: Optional[CalibrationTable] = None,
                     rel_tol: float = 0.05,
                     calibration_frames: int = 2) -> TargetRateOutcome:
    """Hit a requested bpp: pick the operating point from a calibration table
    (measured on a short prefix if not supplied), then bisect the intra
    tradeoff within its group against real encodes."""
    if table is None:
        prefix = list(frames[:max(1, calibration_frames)])
        table = calibrate(codec, prefix, GopConfig(gop.gop_size, gop.mode))
    _, idx = select_lambda_pair(target_bpp, table)
    lo, hi = LAMBDA_I_GROUPS[idx]
    cache: dict[float, tuple[RdPoint, bytes]] = {}

    def eval_fn(lam: float) -> float:
        cache[lam] = measure_point(codec, frames, gop, lam, idx)
        return cache[lam][0].bpp

    search = search_rate(eval_fn, target_bpp, lo=lo, hi=hi, rel_tol=rel_tol)
    point, data = cache[search.lambda_i]
    return TargetRateOutcome(data, point, idx, search)


def ingest_anchor(path, label: str = "") -> RdCurve:
    """Read an externally produced anchor curve.

    CSV columns: label, bpp, psnr_y, psnr_u, psnr_v (a header row is allowed).
    Per-plane PSNRs are combined with the standard 6:1:1 luma weighting.
    """
    path = Path(path)
    points = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[1:2] == ["bpp"]):
                continue
            if len(row) != 5:
                raise EvaluationError(
                    f"{path}:{lineno}: expected 5 columns "
                    f"(label, bpp, psnr_y, psnr_u, psnr_v), got {len(row)}")
            try:
                bpp = float(row[1])
                psnr = combine_psnr(float(row[2]), float(row[3]), float(row[4]))
                points.append(RdPoint(bpp, psnr, label=row[0].strip()))
            except ValueError as exc:
                raise EvaluationError(f"{path}:{lineno}: {exc}") from exc
    if not points:
        raise EvaluationError(f"{path}: no data rows")
    try:
        return RdCurve.from_points(points, label or path.stem)
    except ValueError as exc:
        raise EvaluationError(f"{path}: {exc}") from exc


def curve_to_csv(curve: RdCurve, path) -> None:
    """Inverse of ingest_anchor for bench outputs (planes collapse to the
    combined figure, repeated so a round trip preserves it)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "bpp", "psnr_y", "psnr_u", "psnr_v"])
        for p in curve.points:
            writer.writerow([p.label or curve.label, f"{p.bpp:.8f}",
                             f"{p.psnr:.6f}", f"{p.psnr:.6f}", f"{p.psnr:.6f}"])


def emit_report(curves: Sequence[RdCurve], bd_table: dict[str, float],
                out_dir) -> dict:
    """Write results.json (deterministic bytes) and rd_plot.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "curves": [
            {"label": c.label,
             "points": [{"bpp": p.bpp, "psnr": p.psnr, "lambda_i": p.lambda_i,
                         "lambda_p": p.lambda_p} for p in c.points]}
            for c in curves
        ],
        "bd_rate_percent": dict(sorted(bd_table.items())),
    }
    (out / "results.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for c in curves:
        ax.plot(c.bpps, c.psnrs, marker="o", label=c.label or "curve")
    ax.set_xlabel("bits per pixel")
    ax.set_ylabel("PSNR-YUV (dB)")
    ax.grid(True, alpha=0.3)
    if curves:
        ax.legend()
    fig.tight_layout()
    fig.savefig(out / "rd_plot.png", dpi=120)
    plt.close(fig)
    return doc
