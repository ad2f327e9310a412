"""Experiment orchestration: config, seeded batch generation, metric runs.

Everything is deterministic for a fixed config and mock backend: item seeds
derive from the arm's base seed through a bijective mix, style images rotate
through a seeded shuffle, and dataset writes happen in item order regardless
of backend completion order.
"""

from __future__ import annotations

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import annotate, composer, maskgen, metrics
from .backend import (
    EmbeddingSpace,
    GenRequest,
    HttpBackend,
    MockBackend,
)
from .maskgen import MaskFamily
from .noisefield import splitmix64

DEFAULT_PROMPT = (
    "wildfire with flame and smoke, drone view, photo realistic, "
    "high resolution, 4k, HD."
)
DEFAULT_STRENGTH = 0.5
DEFAULT_GUIDANCE = 5.0
BASELINE_STRENGTH = 0.99
ENV_BACKEND_URL = "FLAMEFORGE_BACKEND_URL"
ENV_OUTPUT_ROOT = "FLAMEFORGE_OUTPUT_ROOT"

NOISE_SIGMA_GRID = (0.01, 0.05, 0.1, 0.5)


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class GenerationRunError(RuntimeError):
    """Generation failure rate exceeded the configured threshold."""


class MissingInputError(FileNotFoundError):
    """A metric input (manifest, real-image dir) is absent."""


@dataclass
class ArmConfig:
    name: str
    family: str  # binary | colored | noise | perlin | none
    count: int = 16
    base_seed: int = 0
    sigma: float = 0.0
    use_style_image: bool = True
    strength: float = DEFAULT_STRENGTH
    guidance: float = DEFAULT_GUIDANCE
    steps: int = 30
    prompt: str = DEFAULT_PROMPT
    negative_prompt: str = ""
    alpha: float = 1.0

    def __post_init__(self):
        if self.family not in {"binary", "colored", "noise", "perlin", "none"}:
            raise ConfigError(f"arm {self.name!r}: unknown family {self.family!r}")
        if self.count < 1:
            raise ConfigError(f"arm {self.name!r}: count must be >= 1")
        if not 0.0 < self.strength <= 1.0:
            raise ConfigError(f"arm {self.name!r}: strength must be in (0, 1]")


@dataclass
class BackendConfig:
    mode: str = "mock"  # mock | http
    url: str = ""
    mock_seed: int = 0
    max_inflight: int = 4
    timeout: float = 120.0


@dataclass
class MetricsConfig:
    normalization_mode: metrics.NormalizationMode = metrics.NormalizationMode.NONE
    reference: float = 1.0
    fire_prompt: str = "a photo of fire"
    nonfire_prompt: str = "a photo of a landscape with no fire"
    temperature: float = 100.0
    crop_pad: float = 0.1


@dataclass
class ExperimentConfig:
    output_root: Path
    canvas: tuple[int, int] = (512, 512)
    style_dir: Path | None = None
    palette_dir: Path | None = None
    palette_file: Path | None = None
    arms: list[ArmConfig] = field(default_factory=list)
    backend: BackendConfig = field(default_factory=BackendConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    failure_threshold: float = 0.05

    def __post_init__(self):
        names = [a.name for a in self.arms]
        if len(names) != len(set(names)):
            raise ConfigError("arm names must be unique")

    def arm(self, name: str) -> ArmConfig:
        for arm in self.arms:
            if arm.name == name:
                return arm
        raise ConfigError(f"unknown arm {name!r}")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        project = data.get("project", {})
        backend_data = data.get("backend", {})
        metrics_data = dict(data.get("metrics", {}))
        if "normalization_mode" in metrics_data:
            metrics_data["normalization_mode"] = metrics.NormalizationMode(
                metrics_data["normalization_mode"]
            )
        arms = [ArmConfig(**arm) for arm in data.get("arm", [])]
        config = ExperimentConfig(
            output_root=Path(
                os.environ.get(ENV_OUTPUT_ROOT, project.get("output_root", "out"))
            ),
            canvas=tuple(project.get("canvas", (512, 512))),
            style_dir=Path(project["style_dir"]) if "style_dir" in project else None,
            palette_dir=Path(project["palette_dir"]) if "palette_dir" in project else None,
            palette_file=Path(project["palette_file"]) if "palette_file" in project else None,
            arms=arms,
            backend=BackendConfig(**backend_data),
            metrics=MetricsConfig(**metrics_data),
            failure_threshold=project.get("failure_threshold", 0.05),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    if ENV_BACKEND_URL in os.environ:
        config.backend.mode = "http"
        config.backend.url = os.environ[ENV_BACKEND_URL]
    return config


def make_backend(config: ExperimentConfig):
    if config.backend.mode == "mock":
        return MockBackend(seed=config.backend.mock_seed)
    if config.backend.mode == "http":
        if not config.backend.url:
            raise ConfigError("http backend needs a url")
        return HttpBackend(config.backend.url, timeout=config.backend.timeout)
    raise ConfigError(f"unknown backend mode {config.backend.mode!r}")


def load_palette(config: ExperimentConfig) -> maskgen.FirePalette:
    if config.palette_file is not None:
        data = json.loads(Path(config.palette_file).read_text())
        return maskgen.FirePalette(
            colors=np.array(data["colors"], dtype=np.uint8),
            source_count=data.get("source_count", 0),
        )
    if config.palette_dir is not None:
        return maskgen.build_palette(config.palette_dir)
    return maskgen.default_palette()


def save_palette(palette: maskgen.FirePalette, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "source_count": palette.source_count,
                "colors": palette.colors.tolist(),
            }
        )
    )


def item_seed(base_seed: int, i: int) -> int:
    """Bijective derivation: distinct items always get distinct seeds."""
    return splitmix64((base_seed + i) & 0xFFFFFFFFFFFFFFFF)


def _style_paths(style_dir: Path) -> list[Path]:
    return sorted(
        (p for p in style_dir.rglob("*") if p.suffix.lower() in maskgen.IMAGE_SUFFIXES),
        key=lambda p: str(p),
    )


def _style_for_item(paths: list[Path], base_seed: int, i: int) -> Path:
    """Round-robin without replacement; each epoch is reshuffled by seed."""
    epoch, pos = divmod(i, len(paths))
    order = np.random.default_rng(splitmix64(base_seed ^ epoch)).permutation(len(paths))
    return paths[order[pos]]


def build_mask(arm: ArmConfig, canvas: tuple[int, int], palette, seed: int) -> maskgen.AugmentedMask:
    family = MaskFamily(arm.family)
    spec = maskgen.random_mask_spec(
        canvas[0],
        canvas[1],
        family=family,
        seed=splitmix64(seed ^ 0x11),
        sigma=arm.sigma if family is MaskFamily.NOISE else 0.0,
    )
    mask = maskgen.gen_binary_mask(
        maskgen.MaskSpec(
            canvas_w=spec.canvas_w,
            canvas_h=spec.canvas_h,
            regions=spec.regions,
            family=MaskFamily.BINARY,
            rng_seed=spec.rng_seed,
            max_regions=spec.max_regions,
        )
    )
    if family is MaskFamily.BINARY:
        return mask
    mask = maskgen.colorize(mask, palette, seed=splitmix64(seed ^ 0x22))
    if family is MaskFamily.COLORED:
        return mask
    if family is MaskFamily.NOISE:
        return maskgen.add_gaussian(mask, arm.sigma, seed=splitmix64(seed ^ 0x33))
    return maskgen.apply_perlin(mask, spec.perlin)


def run_generate(config: ExperimentConfig, arm_name: str, backend=None) -> Path:
    """Generate one arm's dataset; returns the manifest path."""
    arm = config.arm(arm_name)
    backend = backend or make_backend(config)
    palette = load_palette(config)
    canvas = config.canvas
    style_paths = []
    if arm.use_style_image:
        if config.style_dir is None or not _style_paths(Path(config.style_dir)):
            raise MissingInputError(
                f"arm {arm.name!r} uses style images but no style_dir is configured"
            )
        style_paths = _style_paths(Path(config.style_dir))

    items: list[annotate.DatasetItem | None] = [None] * arm.count
    failures: list[tuple[int, Exception]] = []

    def build_item(i: int):
        seed = item_seed(arm.base_seed, i)
        if arm.use_style_image:
            style = composer.prepare_style(_style_for_item(style_paths, arm.base_seed, i), canvas)
        else:
            style = composer.neutral_canvas(*canvas)
        if arm.family == "none":
            mask = None
            composite = composer.CompositeImage(
                rgb=style.rgb.copy(), mask_ref="", style_ref=style.source_id
            )
        else:
            mask = build_mask(arm, canvas, palette, seed)
            composite = composer.fuse(style, mask, alpha=arm.alpha, mask_ref=f"{arm.name}/{i:06d}")
        req = GenRequest(
            init_image=composite,
            prompt=arm.prompt,
            negative_prompt=arm.negative_prompt,
            denoise_strength=arm.strength,
            guidance_scale=arm.guidance,
            steps=arm.steps,
            seed=splitmix64(seed ^ 0x44),
        )
        return i, seed, style, mask, req

    prepared = [build_item(i) for i in range(arm.count)]

    def dispatch(entry):
        i, seed, style, mask, req = entry
        try:
            result = backend.generate(req)
        except Exception as exc:  # noqa: BLE001 - partial-failure policy
            return i, exc
        stem = f"{i:06d}"
        if mask is not None:
            boxes = annotate.boxes_from_mask(mask)
            mask_rgb = mask.rgb
            family = mask.family.value
        else:
            boxes = []
            mask_rgb = np.zeros((canvas[1], canvas[0], 3), dtype=np.uint8)
            family = "none"
        record = annotate.DatasetRecord(
            image_path=f"images/{stem}.png",
            mask_path=f"masks/{stem}.png",
            boxes=boxes,
            family=family,
            arm=arm.name,
            seeds={"item": seed, "generation": req.seed},
            prompt=arm.prompt,
            style_source=style.source_id,
        )
        return i, annotate.DatasetItem(record=record, image=result.image, mask_rgb=mask_rgb)

    with ThreadPoolExecutor(max_workers=config.backend.max_inflight) as pool:
        for i, outcome in pool.map(dispatch, prepared):
            if isinstance(outcome, Exception):
                failures.append((i, outcome))
            else:
                items[i] = outcome

    if len(failures) / arm.count > config.failure_threshold:
        detail = "; ".join(f"item {i}: {exc}" for i, exc in failures[:3])
        raise GenerationRunError(
            f"arm {arm.name!r}: {len(failures)}/{arm.count} items failed ({detail})"
        )
    arm_root = config.output_root / arm.name
    return annotate.write_dataset([it for it in items if it is not None], arm_root)


def _load_real_embeddings(real_dir: Path, canvas, backend) -> list:
    paths = _style_paths(real_dir)
    if len(paths) < 2:
        raise MissingInputError(f"need >= 2 real images under {real_dir}")
    return [
        backend.embed_inception(composer.prepare_style(p, canvas).rgb) for p in paths
    ]


def evaluate_arm(
    config: ExperimentConfig,
    arm_name: str,
    real_stats: metrics.GaussianStats,
    backend,
) -> metrics.MetricsReport:
    """Compute FID/nFID, CLIP Score, and CLIP Confidence for one generated arm."""
    from PIL import Image

    arm = config.arm(arm_name)
    manifest = config.output_root / arm.name / "manifest.jsonl"
    if not manifest.exists():
        raise MissingInputError(f"missing manifest {manifest}; run generate first")
    records = annotate.read_manifest(manifest)
    if len(records) < 2:
        raise MissingInputError(f"arm {arm_name!r} has fewer than 2 records")
    mcfg = config.metrics
    prompt_emb = backend.embed_text(arm.prompt)
    fire_emb = backend.embed_text(mcfg.fire_prompt)
    nonfire_emb = backend.embed_text(mcfg.nonfire_prompt)
    inception = []
    evals = []
    for rec in records:
        image = np.asarray(
            Image.open(config.output_root / arm.name / rec.image_path).convert("RGB")
        )
        inception.append(backend.embed_inception(image))
        score = metrics.clip_score(backend.embed_image(image), prompt_emb)
        confs = []
        h, w = image.shape[:2]
        for _, cx, cy, bw, bh in rec.boxes:
            px = bw * w * mcfg.crop_pad
            py = bh * h * mcfg.crop_pad
            x0 = max(0, int(np.floor((cx - bw / 2) * w - px)))
            x1 = min(w, int(np.ceil((cx + bw / 2) * w + px)))
            y0 = max(0, int(np.floor((cy - bh / 2) * h - py)))
            y1 = min(h, int(np.ceil((cy + bh / 2) * h + py)))
            patch = image[y0:y1, x0:x1]
            confs.append(
                metrics.clip_confidence(
                    backend.embed_image(patch), fire_emb, nonfire_emb, mcfg.temperature
                )
            )
        evals.append(metrics.ImageEval(clip_score=score, region_confidences=confs))
    gen_stats = metrics.fit_gaussian(inception)
    fid = metrics.frechet_distance(real_stats, gen_stats)
    return metrics.aggregate(
        arm_name,
        fid,
        evals,
        mode=mcfg.normalization_mode,
        reference=mcfg.reference,
    )


def run_metrics(
    config: ExperimentConfig,
    arm_names: list[str],
    real_dir: str | Path,
    backend=None,
) -> list[metrics.MetricsReport]:
    """Evaluate arms against a real-image directory; writes per-arm report JSON."""
    backend = backend or make_backend(config)
    real_dir = Path(real_dir)
    if not real_dir.is_dir():
        raise MissingInputError(f"real-image directory {real_dir} not found")
    real_stats = metrics.fit_gaussian(
        _load_real_embeddings(real_dir, config.canvas, backend)
    )
    reports = []
    for name in arm_names:
        report = evaluate_arm(config, name, real_stats, backend)
        (config.output_root / name / "report.json").write_text(report.to_json())
        reports.append(report)
    return reports


def write_summary(config: ExperimentConfig, out_dir: Path | None = None) -> Path:
    """Merge per-arm report JSON into one CSV plus figures; config order."""
    out_dir = out_dir or config.output_root
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for arm in config.arms:
        path = config.output_root / arm.name / "report.json"
        if path.exists():
            reports.append(metrics.MetricsReport.from_json(path.read_text()))
    if not reports:
        raise MissingInputError("no arm reports found; run evaluate first")
    csv_path = out_dir / "summary.csv"
    lines = ["arm,nfid,clip_score,clip_confidence"]
    for r in reports:
        conf = "" if r.clip_confidence_mean is None else f"{r.clip_confidence_mean:.4f}"
        lines.append(f"{r.arm},{r.nfid:.4f},{r.clip_score_mean:.4f},{conf}")
    csv_path.write_text("\n".join(lines) + "\n")
    render_summary_figures(reports, out_dir / "figures")
    return csv_path


def render_summary_figures(reports: list[metrics.MetricsReport], fig_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for r in reports:
        ax.scatter(r.nfid, r.clip_score_mean, label=r.arm)
        ax.annotate(r.arm, (r.nfid, r.clip_score_mean), fontsize=8,
                    xytext=(4, 4), textcoords="offset points")
    ax.set_xlabel("nFID (lower is better)")
    ax.set_ylabel("CLIP Score (higher is better)")
    ax.set_title("Image quality vs text alignment by arm")
    fig.tight_layout()
    scatter = fig_dir / "quality_scatter.png"
    fig.savefig(scatter, dpi=150)
    plt.close(fig)
    paths.append(scatter)

    with_conf = [r for r in reports if r.clip_confidence_mean is not None]
    if with_conf:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        ax.bar([r.arm for r in with_conf], [r.clip_confidence_mean for r in with_conf])
        ax.set_ylim(0, 1)
        ax.set_ylabel("mean CLIP Confidence (fire)")
        ax.set_title("Fire realism of cropped mask regions by arm")
        fig.tight_layout()
        bars = fig_dir / "clip_confidence_bar.png"
        fig.savefig(bars, dpi=150)
        plt.close(fig)
        paths.append(bars)
    return paths
