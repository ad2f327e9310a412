"""Command-line entry point for the shim server."""

from __future__ import annotations

import click

from .config import ServerConfig


@click.group()
def main():
    """Reference model server for the flameforge wire protocol."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8760, show_default=True, type=int)
@click.option("--device", default="auto", show_default=True, type=click.Choice(["auto", "cuda", "cpu"]))
@click.option("--diffusion-model", default="runwayml/stable-diffusion-v1-5", show_default=True)
@click.option("--clip-model", default="openai/clip-vit-base-patch32", show_default=True)
def serve(host, port, device, diffusion_model, clip_model):
    """Start the HTTP server (models load lazily on first request)."""
    from .server import serve as run_server

    try:
        config = ServerConfig(
            host=host,
            port=port,
            device=device,
            diffusion_model=diffusion_model,
            clip_model=clip_model,
        )
    except ValueError as exc:
        raise click.ClickException(str(exc))
    run_server(config)


if __name__ == "__main__":
    main()
