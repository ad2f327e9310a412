"""Fréchet distance, CLIP Score, CLIP Confidence, and per-arm aggregation."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .backend import EmbeddingSpace, EmbeddingVector

_EIG_CLIP = -1e-8


class NormalizationMode(enum.Enum):
    NONE = "none"
    DIVIDE_BY_REFERENCE = "divide_by_reference"


@dataclass
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    n: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.covariance = np.asarray(self.covariance, dtype=np.float64)
        d = len(self.mean)
        if self.covariance.shape != (d, d):
            raise ValueError("covariance shape inconsistent with mean")
        if self.n < 2:
            raise ValueError("need at least 2 samples")
        if np.abs(self.covariance - self.covariance.T).max() > 1e-9:
            raise ValueError("covariance must be symmetric")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.covariance).all()):
            raise ValueError("non-finite statistics")

    @property
    def dim(self) -> int:
        return len(self.mean)


def fit_gaussian_rows(data: np.ndarray) -> GaussianStats:
    """Sample mean and unbiased covariance of an (n, d) sample matrix."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need an (n >= 2, d) sample matrix")
    mean = data.mean(axis=0)
    cov = np.cov(data, rowvar=False, ddof=1).reshape(data.shape[1], data.shape[1])
    cov = (cov + cov.T) / 2
    return GaussianStats(mean=mean, covariance=cov, n=data.shape[0])


def fit_gaussian(embeddings: list[EmbeddingVector]) -> GaussianStats:
    """Sample mean and unbiased covariance of a same-space embedding batch."""
    if len(embeddings) < 2:
        raise ValueError("need at least 2 embeddings")
    spaces = {e.space for e in embeddings}
    if len(spaces) != 1:
        raise ValueError(f"mixed embedding spaces: {sorted(s.value for s in spaces)}")
    return fit_gaussian_rows(np.stack([e.values for e in embeddings]))


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix via eigendecomposition.

    Slightly negative eigenvalues (roundoff) are clipped to zero; genuinely
    negative spectra are rejected.
    """
    sym = (mat + mat.T) / 2
    vals, vecs = np.linalg.eigh(sym)
    scale = max(1.0, abs(vals.max()))
    if vals.min() < _EIG_CLIP * scale:
        raise ValueError(f"matrix not PSD (min eigenvalue {vals.min():.3e})")
    # zero the sub-roundoff tail: sqrt would otherwise amplify rank noise
    vals[vals < 1e-12 * scale] = 0.0
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The product square root is evaluated through the congruence
    A = S_a^{1/2}, Tr((S_a S_b)^{1/2}) = Tr((A S_b A)^{1/2}), which keeps every
    eigendecomposition on a symmetric PSD matrix.
    """
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    root_a = sqrtm_psd(a.covariance)
    cross = sqrtm_psd(root_a @ b.covariance @ root_a)
    mean_diff = a.mean - b.mean
    dist = float(
        mean_diff @ mean_diff
        + np.trace(a.covariance)
        + np.trace(b.covariance)
        - 2.0 * np.trace(cross)
    )
    if dist < -1e-6:
        raise ValueError(f"Fréchet distance came out negative: {dist}")
    return max(dist, 0.0)


def normalize_fid(
    fid: float, mode: NormalizationMode = NormalizationMode.NONE, reference: float = 1.0
) -> float:
    if mode is NormalizationMode.NONE:
        return fid
    if reference <= 0:
        raise ValueError("reference must be > 0")
    return fid / reference


def _cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    return float(np.dot(a.unit(), b.unit()))


def clip_score(img: EmbeddingVector, txt: EmbeddingVector) -> float:
    """100 x max(0, cosine(image, text))."""
    if img.space is not EmbeddingSpace.CLIP_IMAGE or txt.space is not EmbeddingSpace.CLIP_TEXT:
        raise ValueError("clip_score needs a ClipImage and a ClipText embedding")
    return 100.0 * max(0.0, _cosine(img, txt))


def clip_confidence(
    patch: EmbeddingVector,
    fire_txt: EmbeddingVector,
    nonfire_txt: EmbeddingVector,
    temperature: float = 100.0,
) -> float:
    """Fire probability under a two-class zero-shot softmax over scaled cosines."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    logit_fire = temperature * _cosine(patch, fire_txt)
    logit_non = temperature * _cosine(patch, nonfire_txt)
    m = max(logit_fire, logit_non)
    ef, en = np.exp(logit_fire - m), np.exp(logit_non - m)
    return float(ef / (ef + en))


@dataclass
class ImageEval:
    """Per-image metric inputs: one CLIP score, one confidence per mask region."""

    clip_score: float
    region_confidences: list[float]


@dataclass
class MetricsReport:
    arm: str
    fid: float
    nfid: float
    clip_score_mean: float
    clip_confidence_mean: float | None  # None for arms without masks (baseline)
    image_count: int
    region_count: int
    normalization_mode: NormalizationMode
    schema_version: int = 1

    def __post_init__(self):
        if self.fid < 0:
            raise ValueError("fid must be >= 0")
        if self.clip_confidence_mean is not None and not 0 <= self.clip_confidence_mean <= 1:
            raise ValueError("clip confidence outside [0, 1]")

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": self.schema_version,
                "arm": self.arm,
                "fid": self.fid,
                "nfid": self.nfid,
                "clip_score_mean": self.clip_score_mean,
                "clip_confidence_mean": self.clip_confidence_mean,
                "image_count": self.image_count,
                "region_count": self.region_count,
                "normalization_mode": self.normalization_mode.value,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        data = json.loads(text)
        data["normalization_mode"] = NormalizationMode(data["normalization_mode"])
        return cls(**data)


def aggregate(
    arm: str,
    fid: float,
    images: list[ImageEval],
    mode: NormalizationMode = NormalizationMode.NONE,
    reference: float = 1.0,
) -> MetricsReport:
    """Arm-level report: per-image confidence is the mean over its regions,
    arm values are means over images."""
    if not images:
        raise ValueError("no image evaluations to aggregate")
    score_mean = float(np.mean([im.clip_score for im in images]))
    with_regions = [im for im in images if im.region_confidences]
    if with_regions:
        conf_mean = float(
            np.mean([np.mean(im.region_confidences) for im in with_regions])
        )
    else:
        conf_mean = None
    return MetricsReport(
        arm=arm,
        fid=fid,
        nfid=normalize_fid(fid, mode, reference),
        clip_score_mean=score_mean,
        clip_confidence_mean=conf_mean,
        image_count=len(images),
        region_count=sum(len(im.region_confidences) for im in images),
        normalization_mode=mode,
    )
