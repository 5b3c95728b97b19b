"""Request/response models for the codec service.

The service is a local worker: requests carry filesystem paths, not payloads,
so raw video and bitstreams never travel through JSON.
"""

from __future__ import annotations

import re
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from ..rate_adaption import LAMBDA_P_VALUES

_SIZE_RE = re.compile(r"^(\d+)x(\d+)$")


def parse_size(size: str) -> tuple[int, int]:
    m = _SIZE_RE.match(size)
    if not m:
        raise ValueError(f"size must look like 352x288, got {size!r}")
    w, h = int(m.group(1)), int(m.group(2))
    if w % 2 or h % 2:
        raise ValueError(f"size must have even dimensions, got {w}x{h}")
    return w, h


class SynthRequest(BaseModel):
    kind: Literal["static", "translate", "rotate", "noise"] = "translate"
    size: str = "256x256"
    frames: int = Field(16, ge=1)
    seed: int = 0
    out: str
    dx: float = 1.5
    dy: float = -0.75
    deg_per_frame: float = 1.0
    smoothness: float = 2.5

    @field_validator("size")
    @classmethod
    def _size_ok(cls, v):
        parse_size(v)
        return v


class SynthResponse(BaseModel):
    out: str
    frames: int
    width: int
    height: int
    nbytes: int


class InitCheckpointRequest(BaseModel):
    out: str
    preset: Literal["paper", "tiny"] = "paper"
    with_residual: bool = True
    seed: int = 0


class CheckpointInfo(BaseModel):
    path: str
    model_hash: str
    meta: dict = {}


class FrameStatsOut(BaseModel):
    index: int
    frame_type: int
    bits: int
    bpp: float
    psnr: float
    motion_bits: int


class EncodeRequest(BaseModel):
    input: str
    size: str
    frames: int = Field(..., ge=1)
    checkpoint: str
    out: str
    gop: int = Field(12, ge=1)
    mode: Literal["conditional", "residual"] = "conditional"
    lambda_p: Optional[int] = None
    lambda_i: Optional[float] = None
    target_bpp: Optional[float] = None

    @field_validator("size")
    @classmethod
    def _size_ok(cls, v):
        parse_size(v)
        return v

    @field_validator("lambda_p")
    @classmethod
    def _lambda_p_ok(cls, v):
        if v is not None and v not in LAMBDA_P_VALUES:
            raise ValueError(f"lambda_p must be one of {LAMBDA_P_VALUES}")
        return v

    @model_validator(mode="after")
    def _rate_spec_ok(self):
        if self.target_bpp is not None and (self.lambda_p is not None
                                            or self.lambda_i is not None):
            raise ValueError("target_bpp is mutually exclusive with "
                             "lambda_p/lambda_i")
        return self


class EncodeResponse(BaseModel):
    out: str
    total_bits: int
    bpp: float
    lambda_i: float
    lambda_p: int
    frames: list[FrameStatsOut]
    searched: bool = False
    search_iterations: int = 0
    search_converged: bool = True


class DecodeRequest(BaseModel):
    input: str
    checkpoint: str
    out: str


class DecodeResponse(BaseModel):
    out: str
    frames: int
    width: int
    height: int
    nbytes: int


class PsnrRequest(BaseModel):
    reference: str
    test: str
    size: str
    frames: Optional[int] = Field(None, ge=1)

    @field_validator("size")
    @classmethod
    def _size_ok(cls, v):
        parse_size(v)
        return v


class PsnrResponse(BaseModel):
    frames: list[float]
    mean: float


class RdPointOut(BaseModel):
    bpp: float
    psnr: float
    lambda_i: Optional[float] = None
    lambda_p: Optional[int] = None


class BenchRequest(BaseModel):
    input: str
    size: str
    frames: int = Field(..., ge=1)
    checkpoint: str
    out: str
    gop: int = Field(12, ge=1)
    mode: Literal["conditional", "residual"] = "conditional"
    label: str = "yuvc"
    anchor: Optional[str] = None
    method: Literal["pchip", "cubic"] = "pchip"

    @field_validator("size")
    @classmethod
    def _size_ok(cls, v):
        parse_size(v)
        return v


class BenchResponse(BaseModel):
    out: str
    curve: list[RdPointOut]
    bd_rate: dict[str, float] = {}
    files: list[str]


class BdRateRequest(BaseModel):
    test: str
    anchor: str
    method: Literal["pchip", "cubic"] = "pchip"


class BdRateResponse(BaseModel):
    percent: float
    method: str


class TrainRequest(BaseModel):
    checkpoint_out: str
    config: Optional[str] = None
    schedule: Literal["desk", "residual"] = "desk"
    steps: int = Field(200, ge=1)
    stage: Optional[int] = Field(None, ge=0)
    checkpoint_in: Optional[str] = None
    preset: Literal["paper", "tiny"] = "paper"
    seed: int = 0
    data_seed: int = 0
    clips: int = Field(36, ge=1)
    clip_size: str = "64x64"
    clip_frames: int = Field(6, ge=2)

    @field_validator("clip_size")
    @classmethod
    def _size_ok(cls, v):
        parse_size(v)
        return v


class StageResultOut(BaseModel):
    name: str
    kind: str
    steps: int
    ema_start: float
    ema_end: float
    improved: bool


class TrainResponse(BaseModel):
    checkpoint_out: str
    model_hash: str
    stages: list[StageResultOut]
