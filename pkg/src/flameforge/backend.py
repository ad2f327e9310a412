"""Client boundary to the generation and embedding capabilities.

Two interchangeable backends: ``HttpBackend`` speaks the JSON-over-HTTP wire
protocol to a real model server, ``MockBackend`` is a deterministic in-process
stand-in so the whole pipeline and metric stack run offline.

Wire protocol (JSON bodies, PNG payloads base64-encoded):
  POST /v1/generate     {init_png_b64, prompt, negative_prompt, strength,
                         guidance, steps, seed} -> {image_png_b64, backend_id}
  POST /v1/embed/image  {image_png_b64, space}  -> {values: [...], dim}
  POST /v1/embed/text   {text}                  -> {values: [...], dim}
"""

from __future__ import annotations

import base64
import enum
import hashlib
import io
import json
import time
from dataclasses import dataclass, field

import httpx
import numpy as np
from PIL import Image

from .composer import CompositeImage

CLIP_DIM = 512
INCEPTION_DIM = 2048
DEFAULT_TIMEOUT = 120.0


class EmbeddingSpace(enum.Enum):
    CLIP_IMAGE = "clip_image"
    CLIP_TEXT = "clip_text"
    INCEPTION = "inception"


SPACE_DIMS = {
    EmbeddingSpace.CLIP_IMAGE: CLIP_DIM,
    EmbeddingSpace.CLIP_TEXT: CLIP_DIM,
    EmbeddingSpace.INCEPTION: INCEPTION_DIM,
}


class BackendError(RuntimeError):
    """Non-retryable error reported by the backend."""


class TransportError(RuntimeError):
    """Retryable transport-level failure."""


@dataclass(frozen=True)
class GenRequest:
    init_image: CompositeImage
    prompt: str
    negative_prompt: str = ""
    denoise_strength: float = 0.5
    guidance_scale: float = 5.0
    steps: int = 30
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.denoise_strength <= 1.0:
            raise ValueError("denoise_strength must be in (0, 1]")
        if self.guidance_scale < 0:
            raise ValueError("guidance_scale must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")


@dataclass
class GenResult:
    image: np.ndarray
    backend_id: str
    latency_ms: float


@dataclass
class EmbeddingVector:
    space: EmbeddingSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.isfinite(self.values).all():
            raise ValueError("embedding values must be finite")
        if len(self.values) != SPACE_DIMS[self.space]:
            raise ValueError(
                f"dim {len(self.values)} wrong for space {self.space.value}"
            )

    @property
    def dim(self) -> int:
        return len(self.values)

    def unit(self) -> np.ndarray:
        norm = np.linalg.norm(self.values)
        if norm == 0:
            raise ValueError("zero embedding cannot be normalized")
        return self.values / norm


def encode_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))


def request_payload(req: GenRequest) -> dict:
    return {
        "init_png_b64": base64.b64encode(encode_png(req.init_image.rgb)).decode(),
        "prompt": req.prompt,
        "negative_prompt": req.negative_prompt,
        "strength": req.denoise_strength,
        "guidance": req.guidance_scale,
        "steps": req.steps,
        "seed": req.seed,
    }


def _digest_seed(*parts: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(part)
    return int.from_bytes(h.digest(), "big")


class MockBackend:
    """Pure-function stand-in for the model server.

    generate: seeded Gaussian perturbation with amplitude proportional to the
    denoise strength plus ``round(strength * 4)`` passes of a 3x3 box blur.
    Embeddings are unit vectors drawn from an RNG seeded by a hash of the
    content, so any pixel or character change yields a different vector.
    """

    NOISE_GAIN = 60.0  # channel-units of noise std at strength 1.0

    def __init__(self, seed: int = 0, backend_id: str = "mock"):
        self.seed = seed
        self.backend_id = backend_id

    def _rng(self, *parts: bytes) -> np.random.Generator:
        return np.random.default_rng(
            _digest_seed(self.seed.to_bytes(8, "big"), *parts)
        )

    def generate(self, req: GenRequest) -> GenResult:
        t0 = time.monotonic()
        payload = request_payload(req)
        rng = self._rng(json.dumps(payload, sort_keys=True).encode())
        img = req.init_image.rgb.astype(np.float64)
        img += rng.normal(0.0, self.NOISE_GAIN * req.denoise_strength, size=img.shape)
        for _ in range(int(round(req.denoise_strength * 4))):
            img = _box_blur3(img)
        out = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        return GenResult(
            image=out,
            backend_id=self.backend_id,
            latency_ms=(time.monotonic() - t0) * 1000,
        )

    def _pseudo_embedding(self, space: EmbeddingSpace, *parts: bytes) -> EmbeddingVector:
        rng = self._rng(space.value.encode(), *parts)
        vec = rng.normal(size=SPACE_DIMS[space])
        vec /= np.linalg.norm(vec)
        return EmbeddingVector(space=space, values=vec)

    def _embed_raster(self, image: np.ndarray, space: EmbeddingSpace) -> EmbeddingVector:
        arr = np.asarray(image, dtype=np.uint8)
        # downsampled channel statistics keep a weak content signal in the hash
        small = arr[:: max(1, arr.shape[0] // 8), :: max(1, arr.shape[1] // 8)]
        stats = np.concatenate([small.mean(axis=(0, 1)), small.std(axis=(0, 1))])
        return self._pseudo_embedding(
            space,
            np.ascontiguousarray(arr).tobytes(),
            stats.astype(np.float32).tobytes(),
        )

    def embed_image(self, image: np.ndarray) -> EmbeddingVector:
        return self._embed_raster(image, EmbeddingSpace.CLIP_IMAGE)

    def embed_inception(self, image: np.ndarray) -> EmbeddingVector:
        return self._embed_raster(image, EmbeddingSpace.INCEPTION)

    def embed_text(self, text: str) -> EmbeddingVector:
        grams = [text[i : i + 3] for i in range(max(1, len(text) - 2))]
        return self._pseudo_embedding(
            EmbeddingSpace.CLIP_TEXT, "\x1f".join(grams).encode()
        )


def _box_blur3(img: np.ndarray) -> np.ndarray:
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    out = np.zeros_like(img)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out += padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return out / 9.0


class HttpBackend:
    """Wire-protocol client; retries transport failures, surfaces backend errors."""

    def __init__(
        self,
        base_url: str,
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = 3,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        last_exc: Exception | None = None
        for _ in range(self.retries):
            try:
                resp = self._client.post(self.base_url + path, json=payload)
            except httpx.HTTPError as exc:
                last_exc = exc
                continue
            if resp.status_code >= 400:
                try:
                    detail = resp.json().get("detail", resp.text)
                except ValueError:
                    detail = resp.text
                raise BackendError(f"{path} -> {resp.status_code}: {detail}")
            return resp.json()
        raise TransportError(f"{path}: transport failed after {self.retries} attempts") from last_exc

    def generate(self, req: GenRequest) -> GenResult:
        t0 = time.monotonic()
        body = self._post("/v1/generate", request_payload(req))
        image = decode_png(base64.b64decode(body["image_png_b64"]))
        if image.shape[:2] != req.init_image.rgb.shape[:2]:
            raise BackendError("backend returned mismatched image dimensions")
        return GenResult(
            image=image,
            backend_id=body.get("backend_id", "unknown"),
            latency_ms=(time.monotonic() - t0) * 1000,
        )

    def _embed_image(self, image: np.ndarray, space: EmbeddingSpace) -> EmbeddingVector:
        body = self._post(
            "/v1/embed/image",
            {
                "image_png_b64": base64.b64encode(encode_png(image)).decode(),
                "space": space.value,
            },
        )
        return EmbeddingVector(space=space, values=np.array(body["values"]))

    def embed_image(self, image: np.ndarray) -> EmbeddingVector:
        return self._embed_image(image, EmbeddingSpace.CLIP_IMAGE)

    def embed_inception(self, image: np.ndarray) -> EmbeddingVector:
        return self._embed_image(image, EmbeddingSpace.INCEPTION)

    def embed_text(self, text: str) -> EmbeddingVector:
        body = self._post("/v1/embed/text", {"text": text})
        return EmbeddingVector(space=EmbeddingSpace.CLIP_TEXT, values=np.array(body["values"]))


try:
    from pydantic import BaseModel as _BaseModel
except ImportError:  # pragma: no cover - pydantic ships with fastapi
    _BaseModel = object


class GenBody(_BaseModel):
    init_png_b64: str
    prompt: str
    negative_prompt: str = ""
    strength: float
    guidance: float
    steps: int = 30
    seed: int = 0


class EmbedImageBody(_BaseModel):
    image_png_b64: str
    space: str


class EmbedTextBody(_BaseModel):
    text: str


def create_mock_app(mock: MockBackend | None = None):
    """FastAPI app exposing the mock backend behind the wire protocol."""
    from fastapi import FastAPI, HTTPException

    mock = mock or MockBackend()
    app = FastAPI(title="flameforge mock backend")

    @app.get("/v1/health")
    def health():
        return {"backend_id": mock.backend_id, "models": {"mock": True}}

    @app.post("/v1/generate")
    def generate(body: GenBody):
        try:
            init = decode_png(base64.b64decode(body.init_png_b64))
            req = GenRequest(
                init_image=CompositeImage(rgb=init, mask_ref="", style_ref=""),
                prompt=body.prompt,
                negative_prompt=body.negative_prompt,
                denoise_strength=body.strength,
                guidance_scale=body.guidance,
                steps=body.steps,
                seed=body.seed,
            )
        except (ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        result = mock.generate(req)
        return {
            "image_png_b64": base64.b64encode(encode_png(result.image)).decode(),
            "backend_id": result.backend_id,
        }

    @app.post("/v1/embed/image")
    def embed_image(body: EmbedImageBody):
        try:
            image = decode_png(base64.b64decode(body.image_png_b64))
            space = EmbeddingSpace(body.space)
        except (ValueError, OSError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        if space is EmbeddingSpace.CLIP_TEXT:
            raise HTTPException(status_code=400, detail="space must be an image space")
        vec = mock._embed_raster(image, space)
        return {"values": vec.values.tolist(), "dim": vec.dim}

    @app.post("/v1/embed/text")
    def embed_text(body: EmbedTextBody):
        vec = mock.embed_text(body.text)
        return {"values": vec.values.tolist(), "dim": vec.dim}

    return app
