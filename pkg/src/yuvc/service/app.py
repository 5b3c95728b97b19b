"""HTTP face of the codec: every CLI verb maps onto one endpoint.

Paths in requests are resolved on the service host. Loaded checkpoints are
cached by (path, mtime), so repeated calls against the same model skip the
deserialization cost; the cache is invalidated automatically when a file is
replaced.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
import torch
from fastapi import FastAPI, HTTPException

from .. import evalbench
from ..codec import (CodecConfig, GopConfig, VideoCodec, load_checkpoint,
                     save_checkpoint)
from ..errors import CodecError
from ..frames import (load_yuv_sequence, probe_frame_count, psnr_yuv,
                      save_yuv_sequence)
from ..rate_adaption import LAMBDA_P_VALUES, group_for_lambda_i, mid_lambda_i
from ..synthdata import ClipSpec, generate
from ..training import (SCHEDULES, make_micro_dataset, run_schedule,
                        stages_from_yaml)
from . import schemas
from .schemas import parse_size

app = FastAPI(title="yuvc codec service", version="0.1.0")

_codec_cache: dict[tuple[str, int], VideoCodec] = {}
_cache_lock = threading.Lock()


def get_codec(path: str) -> VideoCodec:
    p = Path(path)
    if not p.is_file():
        raise HTTPException(404, f"checkpoint not found: {path}")
    key = (str(p.resolve()), p.stat().st_mtime_ns)
    with _cache_lock:
        codec = _codec_cache.get(key)
        if codec is None:
            try:
                codec = load_checkpoint(p)
            except Exception as exc:
                raise HTTPException(400, f"cannot load checkpoint {path}: {exc}")
            _codec_cache.clear()  # one model resident at a time; desk scale
            _codec_cache[key] = codec
    return codec


def _load_frames(path: str, size: str, n_frames: int):
    w, h = parse_size(size)
    if not Path(path).is_file():
        raise HTTPException(404, f"input not found: {path}")
    try:
        return load_yuv_sequence(path, w, h, n_frames)
    except CodecError as exc:
        raise HTTPException(400, str(exc))


@app.get("/health")
def health():
    return {"status": "ok", "torch": torch.__version__}


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest):
    w, h = parse_size(req.size)
    spec = ClipSpec(kind=req.kind, width=w, height=h, frames=req.frames,
                    seed=req.seed, dx=req.dx, dy=req.dy,
                    deg_per_frame=req.deg_per_frame, smoothness=req.smoothness)
    frames = generate(spec)
    nbytes = save_yuv_sequence(req.out, frames)
    return schemas.SynthResponse(out=req.out, frames=len(frames), width=w,
                                 height=h, nbytes=nbytes)


@app.post("/checkpoints/init", response_model=schemas.CheckpointInfo)
def init_checkpoint(req: schemas.InitCheckpointRequest):
    torch.manual_seed(req.seed)
    cfg = (CodecConfig.paper(with_residual=req.with_residual)
           if req.preset == "paper"
           else CodecConfig.tiny(with_residual=req.with_residual))
    codec = VideoCodec(cfg)
    model_hash = save_checkpoint(codec, req.out, meta={"preset": req.preset,
                                                       "seed": req.seed})
    return schemas.CheckpointInfo(path=req.out, model_hash=model_hash.hex(),
                                  meta={"preset": req.preset})


def _encode_lambdas(req: schemas.EncodeRequest) -> tuple[float, int]:
    if req.lambda_p is not None:
        idx = LAMBDA_P_VALUES.index(req.lambda_p)
        return (req.lambda_i if req.lambda_i is not None
                else mid_lambda_i(idx)), idx
    if req.lambda_i is not None:
        return req.lambda_i, group_for_lambda_i(req.lambda_i)
    return mid_lambda_i(1), 1


@app.post("/encode", response_model=schemas.EncodeResponse)
def encode(req: schemas.EncodeRequest):
    codec = get_codec(req.checkpoint)
    frames = _load_frames(req.input, req.size, req.frames)
    gop = GopConfig(gop_size=req.gop, mode=req.mode)
    try:
        if req.target_bpp is not None:
            result = evalbench.encode_to_target(codec, frames, gop,
                                                req.target_bpp)
            data, frame_stats = result.data, []
            lambda_i, idx = result.search.lambda_i, result.lambda_p_index
            searched, iters = True, result.search.iterations
            converged = result.search.converged
        else:
            lambda_i, idx = _encode_lambdas(req)
            outcome = codec.encode_sequence(frames, gop, lambda_p_index=idx,
                                            lambda_i=lambda_i)
            data = outcome.bitstream.serialize()
            frame_stats = [schemas.FrameStatsOut(
                index=s.index, frame_type=s.frame_type, bits=s.bits, bpp=s.bpp,
                psnr=s.psnr, motion_bits=s.motion_bits) for s in outcome.stats]
            searched, iters, converged = False, 0, True
    except CodecError as exc:
        raise HTTPException(400, str(exc))
    Path(req.out).write_bytes(data)
    bpp = len(data) * 8 / (req.frames * np.prod(parse_size(req.size)))
    return schemas.EncodeResponse(
        out=req.out, total_bits=len(data) * 8, bpp=float(bpp),
        lambda_i=lambda_i, lambda_p=LAMBDA_P_VALUES[idx], frames=frame_stats,
        searched=searched, search_iterations=iters, search_converged=converged)


@app.post("/decode", response_model=schemas.DecodeResponse)
def decode(req: schemas.DecodeRequest):
    codec = get_codec(req.checkpoint)
    if not Path(req.input).is_file():
        raise HTTPException(404, f"input not found: {req.input}")
    data = Path(req.input).read_bytes()
    try:
        frames = codec.decode_sequence(data)
    except CodecError as exc:
        raise HTTPException(400, str(exc))
    nbytes = save_yuv_sequence(req.out, frames)
    return schemas.DecodeResponse(out=req.out, frames=len(frames),
                                  width=frames[0].width,
                                  height=frames[0].height, nbytes=nbytes)


@app.post("/metrics/psnr", response_model=schemas.PsnrResponse)
def metrics_psnr(req: schemas.PsnrRequest):
    w, h = parse_size(req.size)
    n = req.frames
    if n is None:
        n = min(probe_frame_count(req.reference, w, h),
                probe_frame_count(req.test, w, h))
        if n == 0:
            raise HTTPException(400, "no complete frames in the inputs")
    ref = _load_frames(req.reference, req.size, n)
    test = _load_frames(req.test, req.size, n)
    vals = [psnr_yuv(a, b) for a, b in zip(ref, test)]
    return schemas.PsnrResponse(frames=vals, mean=float(np.mean(vals)))


@app.post("/bench", response_model=schemas.BenchResponse)
def bench(req: schemas.BenchRequest):
    codec = get_codec(req.checkpoint)
    frames = _load_frames(req.input, req.size, req.frames)
    gop = GopConfig(gop_size=req.gop, mode=req.mode)
    try:
        curve = evalbench.evaluate(codec, frames, gop, label=req.label)
        curves = [curve]
        bd = {}
        if req.anchor:
            anchor = evalbench.ingest_anchor(req.anchor)
            curves.append(anchor)
            bd[f"{req.label}_vs_{anchor.label}"] = evalbench.bd_rate(
                curve, anchor, method=req.method)
        evalbench.emit_report(curves, bd, req.out)
        evalbench.curve_to_csv(curve, Path(req.out) / "curve.csv")
    except CodecError as exc:
        raise HTTPException(400, str(exc))
    points = [schemas.RdPointOut(bpp=p.bpp, psnr=p.psnr, lambda_i=p.lambda_i,
                                 lambda_p=p.lambda_p) for p in curve.points]
    files = sorted(f.name for f in Path(req.out).iterdir())
    return schemas.BenchResponse(out=req.out, curve=points, bd_rate=bd,
                                 files=files)


@app.post("/bdrate", response_model=schemas.BdRateResponse)
def bdrate(req: schemas.BdRateRequest):
    for path in (req.test, req.anchor):
        if not Path(path).is_file():
            raise HTTPException(404, f"curve file not found: {path}")
    try:
        test = evalbench.ingest_anchor(req.test)
        anchor = evalbench.ingest_anchor(req.anchor)
        percent = evalbench.bd_rate(test, anchor, method=req.method)
    except CodecError as exc:
        raise HTTPException(400, str(exc))
    return schemas.BdRateResponse(percent=percent, method=req.method)


@app.post("/train", response_model=schemas.TrainResponse)
def train(req: schemas.TrainRequest):
    if req.config is not None:
        if not Path(req.config).is_file():
            raise HTTPException(404, f"config not found: {req.config}")
        try:
            stages = stages_from_yaml(req.config)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
    else:
        stages = SCHEDULES[req.schedule](steps=req.steps)
    if req.stage is not None:
        if not 0 <= req.stage < len(stages):
            raise HTTPException(400, f"stage index {req.stage} out of range "
                                     f"(schedule has {len(stages)} stages)")
        stages = stages[req.stage:req.stage + 1]

    if req.checkpoint_in is not None:
        codec = get_codec(req.checkpoint_in)
    else:
        torch.manual_seed(req.seed)
        with_residual = any(s.kind == "residual" for s in stages)
        cfg = (CodecConfig.paper(with_residual=with_residual)
               if req.preset == "paper"
               else CodecConfig.tiny(with_residual=with_residual))
        codec = VideoCodec(cfg)

    w, h = parse_size(req.clip_size)
    dataset = make_micro_dataset(seed=req.data_seed, n_clips=req.clips,
                                 width=w, height=h, frames=req.clip_frames)
    try:
        results = run_schedule(codec, stages, dataset, seed=req.seed)
    except CodecError as exc:
        raise HTTPException(400, str(exc))
    model_hash = save_checkpoint(codec, req.checkpoint_out, meta={
        "stages": [r.name for r in results]})
    return schemas.TrainResponse(
        checkpoint_out=req.checkpoint_out, model_hash=model_hash.hex(),
        stages=[schemas.StageResultOut(
            name=r.name, kind=r.kind, steps=r.steps, ema_start=r.ema_start,
            ema_end=r.ema_end, improved=r.ema_end < r.ema_start)
            for r in results])
