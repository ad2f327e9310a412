"""Command-line entry points.

Exit codes: 0 ok, 2 config error, 3 backend failure over threshold,
4 metric input missing.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import maskgen, pipeline
from .backend import BackendError, TransportError

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_MISSING_INPUT = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str) -> pipeline.ExperimentConfig:
    try:
        return pipeline.load_config(path)
    except pipeline.ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))


@click.group()
def main():
    """Mask-guided wildfire image synthesis and evaluation."""


@main.group()
def palette():
    """Fire-pixel palette tools."""


@palette.command("build")
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--out", type=click.Path(), default="palette.json", show_default=True)
@click.option("--max-pixels", type=int, default=100_000, show_default=True)
@click.option("--fire-class", type=int, default=0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def palette_build(directory, out, max_pixels, fire_class, seed):
    """Sample fire-box pixels from a YOLO-annotated image directory."""
    try:
        pal = maskgen.build_palette(directory, max_pixels, fire_class, seed)
    except (maskgen.PaletteError, maskgen.AnnotationFormatError) as exc:
        _fail(EXIT_CONFIG, str(exc))
    pipeline.save_palette(pal, out)
    click.echo(f"wrote {len(pal.colors)} colors from {pal.source_count} images to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--arm", "arm_name", required=True)
@click.option("--backend-url", default=None, help="override backend with an HTTP server")
@click.option("--seed", type=int, default=None, help="override the arm's base seed")
@click.option("--count", type=int, default=None, help="override the arm's image count")
@click.option("--out", type=click.Path(), default=None, help="override the output root")
def generate(config_path, arm_name, backend_url, seed, count, out):
    """Generate one experiment arm's dataset."""
    config = _load_config(config_path)
    if backend_url:
        config.backend.mode = "http"
        config.backend.url = backend_url
    if out:
        config.output_root = Path(out)
    try:
        arm = config.arm(arm_name)
    except pipeline.ConfigError as exc:
        _fail(EXIT_CONFIG, str(exc))
    if seed is not None:
        arm.base_seed = seed
    if count is not None:
        arm.count = count
    try:
        manifest = pipeline.run_generate(config, arm_name)
    except pipeline.MissingInputError as exc:
        _fail(EXIT_MISSING_INPUT, str(exc))
    except (pipeline.GenerationRunError, BackendError, TransportError) as exc:
        _fail(EXIT_BACKEND, str(exc))
    click.echo(str(manifest))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--real-dir", required=True, type=click.Path())
@click.option("--arm", "arm_names", multiple=True, help="arms to evaluate (default: all)")
@click.option("--backend-url", default=None)
def evaluate(config_path, real_dir, arm_names, backend_url):
    """Score generated arms against a real-image directory."""
    config = _load_config(config_path)
    if backend_url:
        config.backend.mode = "http"
        config.backend.url = backend_url
    names = list(arm_names) or [a.name for a in config.arms]
    for name in names:
        try:
            config.arm(name)
        except pipeline.ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
    try:
        reports = pipeline.run_metrics(config, names, real_dir)
    except pipeline.MissingInputError as exc:
        _fail(EXIT_MISSING_INPUT, str(exc))
    except (BackendError, TransportError) as exc:
        _fail(EXIT_BACKEND, str(exc))
    for r in reports:
        conf = "n/a" if r.clip_confidence_mean is None else f"{r.clip_confidence_mean:.3f}"
        click.echo(
            f"{r.arm}: nFID={r.nfid:.4f} clip_score={r.clip_score_mean:.2f} clip_conf={conf}"
        )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="summary output directory")
def report(config_path, out):
    """Merge per-arm reports into a CSV summary plus figures."""
    config = _load_config(config_path)
    try:
        csv_path = pipeline.write_summary(config, Path(out) if out else None)
    except pipeline.MissingInputError as exc:
        _fail(EXIT_MISSING_INPUT, str(exc))
    click.echo(str(csv_path))


@main.command("mock-serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8750, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def mock_serve(host, port, seed):
    """Run the deterministic mock backend behind the wire protocol."""
    import uvicorn

    from .backend import MockBackend, create_mock_app

    app = create_mock_app(MockBackend(seed=seed))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
