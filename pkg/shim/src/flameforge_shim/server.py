"""FastAPI server implementing the flameforge wire protocol.

Endpoints are bit-compatible with the pipeline's mock backend:
  POST /v1/generate, POST /v1/embed/image, POST /v1/embed/text,
  GET /v1/health.

GPU work is serialized through an internal lock; concurrent connections are
accepted and queue on it.  Bad payloads return 400 with the offending field,
out-of-memory returns 503 with Retry-After.
"""

from __future__ import annotations

import base64
import io
import threading

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image
from pydantic import BaseModel

from .config import ServerConfig
from .models import CLIP_DIM, INCEPTION_DIM, ModelUnavailableError, RealModels

IMAGE_SPACES = {"clip_image": CLIP_DIM, "inception": INCEPTION_DIM}


class GenBody(BaseModel):
    init_png_b64: str
    prompt: str
    negative_prompt: str = ""
    strength: float
    guidance: float
    steps: int = 30
    seed: int = 0


class EmbedImageBody(BaseModel):
    image_png_b64: str
    space: str


class EmbedTextBody(BaseModel):
    text: str


def _decode_png(b64: str, field: str) -> np.ndarray:
    try:
        data = base64.b64decode(b64, validate=True)
        return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))
    except Exception as exc:
        raise PayloadError(field, f"not a base64 PNG ({exc})") from exc


def _encode_png(rgb: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


class PayloadError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


def _is_oom(exc: Exception) -> bool:
    return "out of memory" in str(exc).lower()


def create_app(config: ServerConfig | None = None, bundle=None) -> FastAPI:
    config = config or ServerConfig()
    bundle = bundle if bundle is not None else RealModels(config)
    app = FastAPI(title="flameforge shim")
    gpu_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def validation_to_400(request: Request, exc: RequestValidationError):
        fields = ", ".join(
            ".".join(str(p) for p in err["loc"] if p != "body") for err in exc.errors()
        )
        return JSONResponse(status_code=400, content={"detail": f"bad payload: {fields}"})

    @app.exception_handler(PayloadError)
    async def payload_to_400(request: Request, exc: PayloadError):
        return JSONResponse(status_code=400, content={"detail": f"{exc.field}: {exc}"})

    @app.exception_handler(ModelUnavailableError)
    async def model_to_503(request: Request, exc: ModelUnavailableError):
        return JSONResponse(status_code=503, content={"detail": str(exc)})

    @app.get("/v1/health")
    def health():
        return {"backend_id": "flameforge-shim", "models": bundle.model_ids()}

    @app.post("/v1/generate")
    def generate(body: GenBody):
        if not 0.0 < body.strength <= 1.0:
            raise PayloadError("strength", "must be in (0, 1]")
        if body.guidance < 0:
            raise PayloadError("guidance", "must be >= 0")
        if body.steps < 1:
            raise PayloadError("steps", "must be >= 1")
        init = _decode_png(body.init_png_b64, "init_png_b64")
        try:
            with gpu_lock:
                image = bundle.generate(
                    init,
                    body.prompt,
                    body.negative_prompt,
                    body.strength,
                    body.guidance,
                    body.steps,
                    body.seed,
                )
        except Exception as exc:
            if _is_oom(exc):
                return JSONResponse(
                    status_code=503,
                    content={"detail": "out of memory"},
                    headers={"Retry-After": "10"},
                )
            raise
        if image.shape[:2] != init.shape[:2]:
            # SD snaps to multiples of 8; restore the requested raster size
            image = np.asarray(
                Image.fromarray(image).resize((init.shape[1], init.shape[0]), Image.BILINEAR)
            )
        return {"image_png_b64": _encode_png(image), "backend_id": "flameforge-shim"}

    @app.post("/v1/embed/image")
    def embed_image(body: EmbedImageBody):
        if body.space not in IMAGE_SPACES:
            raise PayloadError("space", f"must be one of {sorted(IMAGE_SPACES)}")
        rgb = _decode_png(body.image_png_b64, "image_png_b64")
        with gpu_lock:
            if body.space == "clip_image":
                values = bundle.embed_image(rgb)
            else:
                values = bundle.embed_inception(rgb)
        expected = IMAGE_SPACES[body.space]
        if len(values) != expected:
            raise ModelUnavailableError(
                f"model returned dim {len(values)}, expected {expected}"
            )
        return {"values": [float(v) for v in values], "dim": len(values)}

    @app.post("/v1/embed/text")
    def embed_text(body: EmbedTextBody):
        with gpu_lock:
            values = bundle.embed_text(body.text)
        return {"values": [float(v) for v in values], "dim": len(values)}

    return app


def serve(config: ServerConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port)
