"""Service endpoints exercised in-process over real files."""

import warnings

import numpy as np
import pytest
import torch

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from starlette.testclient import TestClient

from yuvc.codec import load_checkpoint, save_checkpoint
from yuvc.frames import frame_nbytes
from yuvc.service import app


@pytest.fixture(scope="module")
def client():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return TestClient(app)


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("svc")


@pytest.fixture(scope="module")
def clip(client, work):
    path = str(work / "clip.yuv")
    r = client.post("/synth", json={"kind": "translate", "size": "64x64",
                                    "frames": 4, "seed": 3, "out": path})
    assert r.status_code == 200, r.text
    return path


@pytest.fixture(scope="module")
def ckpt(client, work):
    path = str(work / "model.pt")
    r = client.post("/checkpoints/init",
                    json={"out": path, "preset": "tiny", "seed": 1})
    assert r.status_code == 200, r.text
    assert len(r.json()["model_hash"]) == 32
    return path


@pytest.fixture(scope="module")
def spread_ckpt(work, ckpt):
    """Checkpoint whose four operating points produce distinct rates."""
    codec = load_checkpoint(ckpt)
    torch.manual_seed(7)
    with torch.no_grad():
        for net in (codec.inter_rate, codec.intra_rate, codec.motion_rate):
            for head in net.heads:
                head.weight.add_(torch.randn_like(head.weight) * 0.35)
                head.bias.add_(torch.randn_like(head.bias) * 0.35)
    path = str(work / "spread.pt")
    save_checkpoint(codec, path)
    return path


class TestBasics:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200
        assert r.json()["status"] == "ok"

    def test_synth_writes_expected_bytes(self, client, clip, work):
        size = (work / "clip.yuv").stat().st_size
        assert size == 4 * frame_nbytes(64, 64)

    def test_synth_rejects_bad_size(self, client, work):
        for size in ("64", "63x64", "0x0x0"):
            r = client.post("/synth", json={"size": size,
                                            "out": str(work / "x.yuv")})
            assert r.status_code == 422, size


class TestEncodeDecode:
    def test_encode_decode_psnr_flow(self, client, work, clip, ckpt):
        bin_path = str(work / "clip.yvc")
        r = client.post("/encode", json={
            "input": clip, "size": "64x64", "frames": 4, "checkpoint": ckpt,
            "out": bin_path, "gop": 2, "lambda_p": 4096})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["total_bits"] == (work / "clip.yvc").stat().st_size * 8
        assert body["lambda_p"] == 4096
        assert len(body["frames"]) == 4
        assert [f["frame_type"] for f in body["frames"]] == [0, 1, 0, 1]
        assert not body["searched"]

        out_path = str(work / "decoded.yuv")
        r = client.post("/decode", json={"input": bin_path,
                                         "checkpoint": ckpt, "out": out_path})
        assert r.status_code == 200, r.text
        assert r.json()["frames"] == 4
        assert r.json()["width"] == 64

        # frame count defaults to probing both files
        r = client.post("/metrics/psnr", json={
            "reference": clip, "test": out_path, "size": "64x64"})
        assert r.status_code == 200, r.text
        stats = r.json()
        assert len(stats["frames"]) == 4
        assert np.isfinite(stats["mean"])
        # decoder output must match the encoder-side stats exactly
        enc_psnrs = [f["psnr"] for f in body["frames"]]
        assert stats["frames"] == pytest.approx(enc_psnrs, abs=1e-9)

    def test_encode_missing_files(self, client, work, clip, ckpt):
        r = client.post("/encode", json={
            "input": str(work / "nope.yuv"), "size": "64x64", "frames": 4,
            "checkpoint": ckpt, "out": str(work / "o.yvc")})
        assert r.status_code == 404
        r = client.post("/encode", json={
            "input": clip, "size": "64x64", "frames": 4,
            "checkpoint": str(work / "nope.pt"), "out": str(work / "o.yvc")})
        assert r.status_code == 404

    def test_encode_validates_rate_controls(self, client, work, clip, ckpt):
        base = {"input": clip, "size": "64x64", "frames": 4,
                "checkpoint": ckpt, "out": str(work / "o.yvc")}
        r = client.post("/encode", json={**base, "lambda_p": 5000})
        assert r.status_code == 422
        r = client.post("/encode", json={**base, "lambda_p": 1024,
                                         "target_bpp": 0.2})
        assert r.status_code == 422
        r = client.post("/encode", json={**base, "frames": 0})
        assert r.status_code == 422

    def test_encode_truncated_input(self, client, work, ckpt):
        short = work / "short.yuv"
        short.write_bytes(b"\x00" * (frame_nbytes(64, 64) - 1))
        r = client.post("/encode", json={
            "input": str(short), "size": "64x64", "frames": 1,
            "checkpoint": ckpt, "out": str(work / "o.yvc")})
        assert r.status_code == 400
        assert "frame 0" in r.json()["detail"]

    def test_decode_rejects_wrong_checkpoint(self, client, work, clip, ckpt):
        bin_path = str(work / "clip2.yvc")
        r = client.post("/encode", json={
            "input": clip, "size": "64x64", "frames": 2, "checkpoint": ckpt,
            "out": bin_path, "gop": 2})
        assert r.status_code == 200
        other = str(work / "other.pt")
        r = client.post("/checkpoints/init",
                        json={"out": other, "preset": "tiny", "seed": 42})
        assert r.status_code == 200
        r = client.post("/decode", json={"input": bin_path,
                                         "checkpoint": other,
                                         "out": str(work / "d.yuv")})
        assert r.status_code == 400
        assert "different checkpoint" in r.json()["detail"]

    def test_target_bpp_search(self, client, work, clip, spread_ckpt):
        # pin the target to a measured rate so the search can actually land
        probe = client.post("/encode", json={
            "input": clip, "size": "64x64", "frames": 4,
            "checkpoint": spread_ckpt, "out": str(work / "probe.yvc"),
            "gop": 2, "lambda_p": 4096})
        assert probe.status_code == 200, probe.text
        target = probe.json()["bpp"]
        r = client.post("/encode", json={
            "input": clip, "size": "64x64", "frames": 4,
            "checkpoint": spread_ckpt, "out": str(work / "t.yvc"),
            "gop": 2, "target_bpp": target})
        assert r.status_code == 200, r.text
        body = r.json()
        assert body["searched"]
        assert 1 <= body["search_iterations"] <= 8
        if body["search_converged"]:
            assert abs(body["bpp"] - target) / target <= 0.05


class TestBench:
    def test_bench_untrained_model_fails_clearly(self, client, work, clip, ckpt):
        r = client.post("/bench", json={
            "input": clip, "size": "64x64", "frames": 4, "checkpoint": ckpt,
            "out": str(work / "bench_untrained"), "gop": 2})
        assert r.status_code == 400
        assert "rate-degenerate" in r.json()["detail"]

    def test_bench_emits_report(self, client, work, clip, spread_ckpt):
        out = work / "bench"
        r = client.post("/bench", json={
            "input": clip, "size": "64x64", "frames": 4,
            "checkpoint": spread_ckpt, "out": str(out), "gop": 2,
            "label": "tiny"})
        assert r.status_code == 200, r.text
        body = r.json()
        assert len(body["curve"]) == 4
        bpps = [p["bpp"] for p in body["curve"]]
        assert bpps == sorted(bpps)
        assert set(body["files"]) == {"curve.csv", "rd_plot.png",
                                      "results.json"}
        # the emitted curve feeds straight back into /bdrate
        r = client.post("/bdrate", json={"test": str(out / "curve.csv"),
                                         "anchor": str(out / "curve.csv")})
        assert r.status_code == 200
        assert r.json()["percent"] == 0.0


class TestBdRate:
    def test_halved_rate_fixture(self, client, work):
        test = work / "test.csv"
        anchor = work / "anchor.csv"
        rows = [(0.05, 30.0), (0.1, 32.5), (0.2, 35.0), (0.4, 37.0)]
        test.write_text("".join(f"t,{b},{p},{p},{p}\n" for b, p in rows))
        anchor.write_text("".join(f"a,{2 * b},{p},{p},{p}\n" for b, p in rows))
        r = client.post("/bdrate", json={"test": str(test),
                                         "anchor": str(anchor)})
        assert r.status_code == 200
        assert r.json()["percent"] == pytest.approx(-50.0, abs=0.1)

    def test_missing_curve_file(self, client, work):
        r = client.post("/bdrate", json={"test": str(work / "none.csv"),
                                         "anchor": str(work / "none.csv")})
        assert r.status_code == 404


class TestTrain:
    def test_single_stage_train_and_resume(self, client, work):
        out1 = str(work / "t1.pt")
        r = client.post("/train", json={
            "checkpoint_out": out1, "schedule": "desk", "steps": 2,
            "stage": 0, "preset": "tiny", "clips": 2, "clip_frames": 2})
        assert r.status_code == 200, r.text
        body = r.json()
        assert [s["name"] for s in body["stages"]] == ["intra"]
        assert len(body["model_hash"]) == 32

        out2 = str(work / "t2.pt")
        r = client.post("/train", json={
            "checkpoint_out": out2, "schedule": "desk", "steps": 2,
            "stage": 1, "preset": "tiny", "clips": 2, "clip_frames": 2,
            "checkpoint_in": out1})
        assert r.status_code == 200, r.text
        assert r.json()["stages"][0]["name"] == "vr_intra"
        assert r.json()["model_hash"] != body["model_hash"]

    def test_bad_stage_index(self, client, work):
        r = client.post("/train", json={
            "checkpoint_out": str(work / "x.pt"), "steps": 1, "stage": 99,
            "preset": "tiny", "clips": 2, "clip_frames": 2})
        assert r.status_code == 400
        assert "out of range" in r.json()["detail"]

    def test_yaml_config_schedule(self, client, work):
        from yuvc.training import Stage, stages_to_yaml
        cfg = work / "sched.yaml"
        stages_to_yaml([Stage("warm", "intra", 2, ("intra",), batch=2,
                              lambda_i=0.05)], cfg)
        r = client.post("/train", json={
            "checkpoint_out": str(work / "y.pt"), "config": str(cfg),
            "preset": "tiny", "clips": 2, "clip_frames": 2})
        assert r.status_code == 200, r.text
        assert [s["name"] for s in r.json()["stages"]] == ["warm"]
