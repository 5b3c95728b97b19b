"""CLI subcommands driven through click's runner (in-process service)."""

import pytest
from click.testing import CliRunner

from yuvc.cli import main
from yuvc.frames import frame_nbytes


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def clip(runner, work):
    path = work / "clip.yuv"
    r = runner.invoke(main, ["synth", "--kind", "translate", "--size", "64x64",
                             "--frames", "4", "--seed", "9",
                             "--out", str(path)])
    assert r.exit_code == 0, r.output
    return path


@pytest.fixture(scope="module")
def ckpt(runner, work):
    path = work / "model.pt"
    r = runner.invoke(main, ["init-ckpt", "--out", str(path),
                             "--preset", "tiny", "--seed", "4"])
    assert r.exit_code == 0, r.output
    assert "model" in r.output
    return path


def test_health(runner):
    r = runner.invoke(main, ["health"])
    assert r.exit_code == 0, r.output
    assert '"status": "ok"' in r.output


def test_synth_reports_size(runner, clip, work):
    assert clip.stat().st_size == 4 * frame_nbytes(64, 64)


def test_encode_decode_psnr(runner, work, clip, ckpt):
    stream = work / "clip.yvc"
    r = runner.invoke(main, [
        "encode", "--input", str(clip), "--size", "64x64", "--frames", "4",
        "--gop", "2", "--lambda-p", "4096",
        "--checkpoint", str(ckpt), "--out", str(stream)])
    assert r.exit_code == 0, r.output
    assert f"{stream.stat().st_size * 8} bits" in r.output
    # one line per frame with the GOP's I/P pattern
    kinds = [line.split("[")[1][0] for line in r.output.splitlines()
             if line.strip().startswith("frame")]
    assert kinds == ["I", "P", "I", "P"]

    decoded = work / "decoded.yuv"
    r = runner.invoke(main, ["decode", "--in", str(stream),
                             "--checkpoint", str(ckpt), "--out", str(decoded)])
    assert r.exit_code == 0, r.output
    assert decoded.stat().st_size == clip.stat().st_size

    r = runner.invoke(main, ["psnr", "--reference", str(clip),
                             "--test", str(decoded), "--size", "64x64"])
    assert r.exit_code == 0, r.output
    assert "mean:" in r.output


def test_encode_rejects_conflicting_rate_flags(runner, work, clip, ckpt):
    r = runner.invoke(main, [
        "encode", "--input", str(clip), "--size", "64x64", "--frames", "4",
        "--lambda-p", "1024", "--target-bpp", "0.3",
        "--checkpoint", str(ckpt), "--out", str(work / "x.yvc")])
    assert r.exit_code != 0
    assert "cannot be combined" in r.output


def test_encode_rejects_unknown_operating_point(runner, work, clip, ckpt):
    r = runner.invoke(main, [
        "encode", "--input", str(clip), "--size", "64x64", "--frames", "4",
        "--lambda-p", "2048",
        "--checkpoint", str(ckpt), "--out", str(work / "x.yvc")])
    assert r.exit_code != 0
    assert "1024" in r.output  # choices are listed in the error


def test_service_errors_become_clean_failures(runner, work, ckpt):
    r = runner.invoke(main, ["decode", "--in", str(work / "missing.yvc"),
                             "--checkpoint", str(ckpt),
                             "--out", str(work / "d.yuv")])
    assert r.exit_code != 0
    assert "/decode failed (404)" in r.output


def test_bdrate_command(runner, work):
    test_csv = work / "test.csv"
    anchor_csv = work / "anchor.csv"
    rows = [(0.05, 30.0), (0.1, 32.5), (0.2, 35.0), (0.4, 37.0)]
    test_csv.write_text("".join(f"t,{b},{p},{p},{p}\n" for b, p in rows))
    anchor_csv.write_text("".join(f"a,{2 * b},{p},{p},{p}\n" for b, p in rows))
    r = runner.invoke(main, ["bdrate", "--test", str(test_csv),
                             "--anchor", str(anchor_csv)])
    assert r.exit_code == 0, r.output
    assert r.output.startswith("-50.000%")


def test_train_single_stage(runner, work):
    out = work / "trained.pt"
    r = runner.invoke(main, [
        "train", "--schedule", "desk", "--steps", "2", "--stage", "0",
        "--preset", "tiny", "--clips", "2", "--clip-frames", "2",
        "--checkpoint-out", str(out)])
    assert r.exit_code == 0, r.output
    assert "intra" in r.output and "wrote" in r.output
    assert out.is_file()


def test_bench_fails_cleanly_on_untrained_model(runner, work, clip, ckpt):
    r = runner.invoke(main, [
        "bench", "--input", str(clip), "--size", "64x64", "--frames", "4",
        "--gop", "2", "--checkpoint", str(ckpt),
        "--out", str(work / "bench")])
    assert r.exit_code != 0
    assert "rate-degenerate" in r.output
