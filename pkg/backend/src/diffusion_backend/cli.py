"""Command line for the inpainting service."""

from __future__ import annotations

import logging
import sys

import click

from .config import BackendConfig
from .service import serve


@click.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8500, show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--stub", is_flag=True, help="Blur-fill engine; no model weights needed.")
@click.option("--model", "base_model", default=None, help="Override the base inpainting model id.")
@click.option("--max-concurrent", default=2, show_default=True, help="Concurrent generation bound.")
@click.option("--scale-ceiling", default=1.0, show_default=True, help="Native strength at scale 1.0.")
@click.option("--steps", default=30, show_default=True, help="Diffusion inference steps.")
@click.option("-v", "--verbose", is_flag=True)
def main(host, port, device, stub, base_model, max_concurrent, scale_ceiling, steps, verbose):
    """Serve POST /inpaint and GET /health."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(message)s")
    config = BackendConfig(
        device=device,
        stub=stub,
        max_concurrent=max_concurrent,
        scale_ceiling=scale_ceiling,
        num_inference_steps=steps,
    )
    if base_model:
        config.base_model = base_model
    try:
        config.validate()
        serve(config, host=host, port=port)
    except (ValueError, RuntimeError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
