"""Command-line client for the codec service.

By default every command spins the service up in-process and talks to it over
a test transport, so no daemon is needed for desk use. Point --server at a
running `yuvc serve` instance to execute on another machine (paths are then
resolved on that host).
"""

from __future__ import annotations

import json
from typing import Optional

import click
import httpx

from .rate_adaption import LAMBDA_P_VALUES


def _client(server: Optional[str]) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        # starlette wants its httpx2-based client; that package is not
        # generally installable yet, and the httpx-based one works fine
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service import app
    return TestClient(app)


def _post(ctx, path: str, payload: dict) -> dict:
    payload = {k: v for k, v in payload.items() if v is not None}
    with _client(ctx.obj.get("server")) as client:
        resp = client.post(path, json=payload)
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.pass_context
def main(ctx, server):
    """Learned variable-rate codec for raw YUV 4:2:0 video."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the codec service."""
    import uvicorn

    from .service import app
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--kind", type=click.Choice(["static", "translate", "rotate", "noise"]),
              default="translate", show_default=True)
@click.option("--size", default="256x256", show_default=True, metavar="WxH")
@click.option("--frames", default=16, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--dx", default=1.5, show_default=True,
              help="Horizontal motion, px/frame (translate).")
@click.option("--dy", default=-0.75, show_default=True,
              help="Vertical motion, px/frame (translate).")
@click.option("--deg-per-frame", default=1.0, show_default=True,
              help="Rotation speed (rotate).")
@click.option("--smoothness", default=2.5, show_default=True,
              help="Texture correlation length.")
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def synth(ctx, kind, size, frames, seed, dx, dy, deg_per_frame, smoothness, out):
    """Generate a synthetic raw I420 clip."""
    doc = _post(ctx, "/synth", {
        "kind": kind, "size": size, "frames": frames, "seed": seed,
        "dx": dx, "dy": dy, "deg_per_frame": deg_per_frame,
        "smoothness": smoothness, "out": out,
    })
    click.echo(f"wrote {doc['out']}: {doc['frames']} frames "
               f"{doc['width']}x{doc['height']} ({doc['nbytes']} bytes)")


@main.command("init-ckpt")
@click.option("--out", required=True, type=click.Path())
@click.option("--preset", type=click.Choice(["paper", "tiny"]), default="paper",
              show_default=True)
@click.option("--residual/--no-residual", default=True, show_default=True,
              help="Include the residual-baseline coder.")
@click.option("--seed", default=0, show_default=True)
@click.pass_context
def init_ckpt(ctx, out, preset, residual, seed):
    """Create a freshly initialized model checkpoint."""
    doc = _post(ctx, "/checkpoints/init", {
        "out": out, "preset": preset, "with_residual": residual, "seed": seed,
    })
    click.echo(f"wrote {doc['path']} (model {doc['model_hash']})")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(),
              help="Raw I420 input (.yuv).")
@click.option("--size", required=True, metavar="WxH")
@click.option("--frames", required=True, type=int)
@click.option("--gop", default=12, show_default=True)
@click.option("--mode", type=click.Choice(["conditional", "residual"]),
              default="conditional", show_default=True)
@click.option("--lambda-p", type=click.Choice([str(v) for v in LAMBDA_P_VALUES]),
              default=None, help="Inter operating point.")
@click.option("--lambda-i", type=float, default=None,
              help="Intra tradeoff (continuous).")
@click.option("--target-bpp", type=float, default=None,
              help="Rate target; mutually exclusive with explicit lambdas.")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def encode(ctx, input_path, size, frames, gop, mode, lambda_p, lambda_i,
           target_bpp, checkpoint, out):
    """Encode raw video into a coded stream."""
    if target_bpp is not None and (lambda_p is not None or lambda_i is not None):
        raise click.UsageError("--target-bpp cannot be combined with "
                               "--lambda-p/--lambda-i")
    doc = _post(ctx, "/encode", {
        "input": input_path, "size": size, "frames": frames, "gop": gop,
        "mode": mode, "lambda_p": int(lambda_p) if lambda_p else None,
        "lambda_i": lambda_i, "target_bpp": target_bpp,
        "checkpoint": checkpoint, "out": out,
    })
    click.echo(f"wrote {doc['out']}: {doc['total_bits']} bits, "
               f"{doc['bpp']:.4f} bpp "
               f"(lambda_p={doc['lambda_p']}, lambda_i={doc['lambda_i']:.4g})")
    if doc["searched"]:
        state = "converged" if doc["search_converged"] else "best effort"
        click.echo(f"rate search: {doc['search_iterations']} probes, {state}")
    for f in doc["frames"]:
        kind = {0: "I", 1: "P", 2: "R"}.get(f["frame_type"], "?")
        click.echo(f"  frame {f['index']:3d} [{kind}] {f['bits']:8d} bits "
                   f"{f['bpp']:.4f} bpp psnr {f['psnr']:.2f} dB")


@main.command()
@click.option("--in", "input_path", required=True, type=click.Path(),
              help="Coded stream.")
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def decode(ctx, input_path, checkpoint, out):
    """Decode a coded stream back to raw I420."""
    doc = _post(ctx, "/decode", {
        "input": input_path, "checkpoint": checkpoint, "out": out,
    })
    click.echo(f"wrote {doc['out']}: {doc['frames']} frames "
               f"{doc['width']}x{doc['height']} ({doc['nbytes']} bytes)")


@main.command()
@click.option("--reference", required=True, type=click.Path())
@click.option("--test", required=True, type=click.Path())
@click.option("--size", required=True, metavar="WxH")
@click.option("--frames", type=int, default=None,
              help="Default: all complete frames common to both files.")
@click.pass_context
def psnr(ctx, reference, test, size, frames):
    """Weighted YUV PSNR between two raw files."""
    doc = _post(ctx, "/metrics/psnr", {
        "reference": reference, "test": test, "size": size, "frames": frames,
    })
    for i, v in enumerate(doc["frames"]):
        click.echo(f"  frame {i:3d}: {v:.3f} dB")
    click.echo(f"mean: {doc['mean']:.3f} dB")


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--size", required=True, metavar="WxH")
@click.option("--frames", required=True, type=int)
@click.option("--checkpoint", required=True, type=click.Path())
@click.option("--gop", default=12, show_default=True)
@click.option("--mode", type=click.Choice(["conditional", "residual"]),
              default="conditional", show_default=True)
@click.option("--label", default="yuvc", show_default=True)
@click.option("--anchor", type=click.Path(), default=None,
              help="Anchor curve CSV for BD-rate.")
@click.option("--method", type=click.Choice(["pchip", "cubic"]),
              default="pchip", show_default=True)
@click.option("--out", required=True, type=click.Path(),
              help="Results directory.")
@click.pass_context
def bench(ctx, input_path, size, frames, checkpoint, gop, mode, label, anchor,
          method, out):
    """RD sweep over the four operating points; emit report and plot."""
    doc = _post(ctx, "/bench", {
        "input": input_path, "size": size, "frames": frames,
        "checkpoint": checkpoint, "gop": gop, "mode": mode, "label": label,
        "anchor": anchor, "method": method, "out": out,
    })
    for p in doc["curve"]:
        click.echo(f"  lambda_p={p['lambda_p']:6d} bpp={p['bpp']:.4f} "
                   f"psnr={p['psnr']:.3f}")
    for name, v in doc["bd_rate"].items():
        click.echo(f"BD-rate {name}: {v:+.2f}%")
    click.echo(f"report in {doc['out']}: {', '.join(doc['files'])}")


@main.command()
@click.option("--test", required=True, type=click.Path(), help="Test curve CSV.")
@click.option("--anchor", required=True, type=click.Path(),
              help="Anchor curve CSV.")
@click.option("--method", type=click.Choice(["pchip", "cubic"]),
              default="pchip", show_default=True)
@click.pass_context
def bdrate(ctx, test, anchor, method):
    """BD-rate between two RD curves (CSV: label,bpp,psnr_y,psnr_u,psnr_v)."""
    doc = _post(ctx, "/bdrate", {"test": test, "anchor": anchor,
                                 "method": method})
    click.echo(f"{doc['percent']:+.3f}% ({doc['method']})")


@main.command()
@click.option("--config", type=click.Path(), default=None,
              help="YAML stage list; default uses a named schedule.")
@click.option("--schedule", type=click.Choice(["desk", "residual"]),
              default="desk", show_default=True)
@click.option("--steps", default=200, show_default=True,
              help="Iterations per stage for named schedules.")
@click.option("--stage", type=int, default=None,
              help="Run a single stage by index.")
@click.option("--checkpoint-in", type=click.Path(), default=None,
              help="Continue from this checkpoint.")
@click.option("--checkpoint-out", required=True, type=click.Path())
@click.option("--preset", type=click.Choice(["paper", "tiny"]), default="paper",
              show_default=True, help="Architecture when starting fresh.")
@click.option("--seed", default=0, show_default=True)
@click.option("--data-seed", default=0, show_default=True)
@click.option("--clips", default=36, show_default=True)
@click.option("--clip-size", default="64x64", show_default=True)
@click.option("--clip-frames", default=6, show_default=True)
@click.pass_context
def train(ctx, config, schedule, steps, stage, checkpoint_in, checkpoint_out,
          preset, seed, data_seed, clips, clip_size, clip_frames):
    """Run the staged training schedule on synthetic desk-scale data."""
    doc = _post(ctx, "/train", {
        "config": config, "schedule": schedule, "steps": steps, "stage": stage,
        "checkpoint_in": checkpoint_in, "checkpoint_out": checkpoint_out,
        "preset": preset, "seed": seed, "data_seed": data_seed, "clips": clips,
        "clip_size": clip_size, "clip_frames": clip_frames,
    })
    for s in doc["stages"]:
        arrow = "improved" if s["improved"] else "NOT improved"
        click.echo(f"  {s['name']:12s} [{s['kind']}] {s['steps']} steps: "
                   f"{s['ema_start']:.4f} -> {s['ema_end']:.4f} ({arrow})")
    click.echo(f"wrote {doc['checkpoint_out']} (model {doc['model_hash']})")


@main.command()
@click.pass_context
def health(ctx):
    """Check that the service responds."""
    with _client(ctx.obj.get("server")) as client:
        resp = client.get("/health")
    click.echo(json.dumps(resp.json()))


if __name__ == "__main__":
    main()
