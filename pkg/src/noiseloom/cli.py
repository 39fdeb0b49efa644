"""Batch command line: generate, repaint, layout-swap, benchmark, serve."""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .attention import attention_to_pgm
from .bench import load_benchmark_config, run_benchmark
from .editing import parse_guidance
from .errors import NoiseLoomError
from .latent import RegionMask, Region, read_latent, write_latent
from .toy import ToyEngine, ToyModelParams, label_map_to_pgm, label_map_to_png


def _engine(prompt, steps=None, toy_config=None) -> ToyEngine:
    overrides = {}
    if toy_config:
        overrides.update(json.loads(Path(toy_config).read_text()))
    if steps is not None:
        overrides["steps"] = steps
    return ToyEngine(tuple(prompt), ToyModelParams(**overrides))


def _write_result(outdir: Path, engine: ToyEngine, z, result) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    write_latent(z, outdir / "initial.nlat")
    write_latent(result.final_latent, outdir / "final.nlat")
    (outdir / "labels.pgm").write_bytes(label_map_to_pgm(result.label_map))
    (outdir / "labels.png").write_bytes(label_map_to_png(result.label_map))
    for token in result.step0_attention.token_names:
        safe = token.strip("<>").replace("/", "_")
        (outdir / f"attention_{safe}.pgm").write_bytes(
            attention_to_pgm(result.step0_attention, token)
        )
    payload = {
        "label_map": result.label_map.labels.tolist(),
        "label_names": list(result.label_map.names),
        "provenance": result.provenance,
    }
    (outdir / "result.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


@click.group()
def main():
    """Noise-space control for a deterministic toy latent-diffusion model."""


@main.command()
@click.option("--seed", type=int, default=0, help="Initial latent seed.")
@click.option("--prompt", "prompts", multiple=True, required=True, help="Category token (repeatable).")
@click.option("--steps", type=int, default=None, help="Denoising steps (default 50).")
@click.option("--sampler", type=click.Choice(["ddim", "plms"]), default="plms")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--from-latent", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Start from an NLAT file instead of sampling from --seed.")
@click.option("--toy-config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of toy model parameter overrides.")
def gen(seed, prompts, steps, sampler, out_dir, from_latent, toy_config):
    """Generate a label map from a seeded (or loaded) initial latent."""
    engine = _engine(prompts, steps, toy_config)
    z = read_latent(from_latent) if from_latent else engine.sample(seed)
    result = engine.generate(z, sampler)
    _write_result(Path(out_dir), engine, z, result)
    click.echo(f"wrote generation results to {out_dir}")


def _load_mask(path: str, rows: int, cols: int) -> RegionMask:
    spec = json.loads(Path(path).read_text())
    if "blocks" in spec:
        return RegionMask.from_blocks([tuple(b) for b in spec["blocks"]], rows, cols)
    if "box" in spec:
        return RegionMask.from_region(Region(*[int(v) for v in spec["box"]]), rows, cols)
    raise NoiseLoomError(f"{path}: mask JSON needs a 'blocks' or 'box' key")


@main.command()
@click.option("--latent", "latent_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--mask", "mask_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help='JSON mask: {"box": [top,left,bottom,right]} or {"blocks": [[r,c],...]} in block units.')
@click.option("--fresh-seed", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def repaint(latent_path, mask_path, fresh_seed, out_path):
    """Re-randomize the masked blocks of a latent file."""
    from .latent import resample_region

    z = read_latent(latent_path)
    mask = _load_mask(mask_path, z.block_rows, z.block_cols)
    write_latent(resample_region(z, mask, fresh_seed), out_path)
    click.echo(f"repainted {mask.count} blocks -> {out_path}")


@main.command()
@click.option("--latent", "latent_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--guidance", "guidance_path", type=click.Path(exists=True, dir_okay=False), required=True,
              help='JSON: {"items": [{"box": [t,l,b,r], "category": "dog"}], "pairing_seed": 0}')
@click.option("--pairing-seed", type=int, default=None, help="Overrides the seed in the guidance file.")
@click.option("--prompt", "prompts", multiple=True,
              help="Prompt categories; defaults to the guidance categories.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--swaps-out", type=click.Path(dir_okay=False), default=None,
              help="Write the applied swap pairs as JSON (default: stdout).")
@click.option("--toy-config", type=click.Path(exists=True, dir_okay=False), default=None)
def layout(latent_path, guidance_path, pairing_seed, prompts, out_path, swaps_out, toy_config):
    """Swap high-attention blocks into the guidance regions of a latent file."""
    guidance, file_seed = parse_guidance(Path(guidance_path).read_text())
    seed = file_seed if pairing_seed is None else pairing_seed
    prompt = tuple(prompts) if prompts else tuple(guidance.categories())
    engine = _engine(prompt, None, toy_config)
    z = read_latent(latent_path)
    swapped, swaps = engine.swap(z, guidance, seed)
    write_latent(swapped, out_path)
    swaps_payload = json.dumps([s.to_jsonable() for s in swaps], sort_keys=True, indent=2) + "\n"
    if swaps_out:
        Path(swaps_out).write_text(swaps_payload)
    else:
        click.echo(swaps_payload, nl=False)
    click.echo(f"swapped latent -> {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default="benchmark.csv")
def bench(config_path, out_path):
    """Run the layout-control benchmark grid and write the metrics CSV."""
    cfg = load_benchmark_config(Path(config_path).read_text())
    table = run_benchmark(cfg)
    Path(out_path).write_text(table.to_csv())
    click.echo(table.to_csv(), nl=False)
    click.echo(f"wrote {out_path}")


@main.command()
@click.option("--port", type=int, default=8008, show_default=True,
              help="Overridden by NOISELOOM_PORT when set.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--snapshot", type=click.Path(dir_okay=False), default=None,
              help="JSON file to restore sessions from at startup and write at shutdown.")
@click.option("--ui", "ui_dir", type=click.Path(file_okay=False), default=None,
              help="Directory of built frontend assets to serve at /ui.")
@click.option("--toy-config", type=click.Path(exists=True, dir_okay=False), default=None,
              help="JSON file of toy model parameter overrides for new sessions.")
def serve(port, host, snapshot, ui_dir, toy_config):
    """Run the interactive session service."""
    from .service import serve as run_service

    env_port = os.environ.get("NOISELOOM_PORT")
    if env_port:
        port = int(env_port)
    params = ToyModelParams(**json.loads(Path(toy_config).read_text())) if toy_config else None
    run_service(port=port, host=host, params=params, snapshot_path=snapshot, ui_dir=ui_dir)


def entrypoint(argv=None) -> int:
    """main() with the documented exit-code contract (usage 2, engine 1)."""
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 2
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return exc.exit_code
    except click.exceptions.Abort:
        return 130
    except NoiseLoomError as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(entrypoint())
