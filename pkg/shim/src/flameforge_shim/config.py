"""Server configuration."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8760
    diffusion_model: str = "runwayml/stable-diffusion-v1-5"
    clip_model: str = "openai/clip-vit-base-patch32"
    inception_model: str = "inception_v3"
    device: str = "auto"  # auto | cuda | cpu
    max_batch: int = 1
    request_timeout: float = 300.0

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError("port out of range")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")

    def resolved_device(self) -> str:
        if self.device != "auto":
            return self.device
        try:
            import torch

            return "cuda" if torch.cuda.is_available() else "cpu"
        except ImportError:
            return "cpu"
